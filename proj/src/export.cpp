#include "iqjcas/harness/export.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace iqjcas::harness {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary RDM export assumes little endian");

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void close_checked(std::ofstream& f, const fs::path& p) {
  f.close();
  if (!f) throw std::runtime_error("write failed: " + p.string());
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json rdm_axes(const RangeDopplerMap& rdm) {
  return {{"rows", rdm.n_range()},
          {"cols", rdm.n_doppler()},
          {"layout", "row-major float64 little-endian, linear power"},
          {"range_bin_m", rdm.range_bin},
          {"velocity_bin_mps", rdm.velocity_bin},
          {"doppler_center_col", rdm.doppler_center()},
          {"pad_range", rdm.pad_range},
          {"pad_doppler", rdm.pad_doppler},
          {"window", to_string(rdm.window)},
          {"distance_formula", "row * range_bin_m"},
          {"velocity_formula", "-(col - doppler_center_col) * velocity_bin_mps"}};
}

void write_rdm_csv(const std::string& path, const RangeDopplerMap& rdm, const std::string& hash) {
  const RMatrix p = rdm.power();
  std::ofstream f = open_out(path);
  f << "# config_hash=" << hash << "\n";
  const json axes = rdm_axes(rdm);
  for (const auto& [k, v] : axes.items()) f << "# " << k << '=' << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  std::string line;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (j) line += ',';
      line += g17(p(i, j));
    }
    f << line << '\n';
  }
  close_checked(f, path);
}

void write_rdm_binary(const std::string& stem, const RangeDopplerMap& rdm, const std::string& hash) {
  const RMatrix p = rdm.power();
  const std::string bin = stem + ".bin";
  std::ofstream f = open_out(bin);
  std::vector<double> row(static_cast<std::size_t>(p.cols()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) row[static_cast<std::size_t>(j)] = p(i, j);
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  close_checked(f, bin);
  json side = rdm_axes(rdm);
  side["config_hash"] = hash;
  side["data_file"] = fs::path(bin).filename().string();
  const std::string sc = stem + ".json";
  std::ofstream s = open_out(sc);
  s << side.dump(2) << "\n";
  close_checked(s, sc);
}

RMatrix read_rdm_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> r;
    const char* s = line.c_str();
    char* end = nullptr;
    for (;;) {
      r.push_back(std::strtod(s, &end));
      if (end == s) throw std::runtime_error("malformed number in " + path);
      if (*end != ',') break;
      s = end + 1;
    }
    if (!rows.empty() && r.size() != rows.front().size())
      throw std::runtime_error("ragged rows in " + path);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) return RMatrix();
  RMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

RMatrix read_rdm_binary(const std::string& stem) {
  std::ifstream s(stem + ".json");
  if (!s) throw std::runtime_error("cannot open " + stem + ".json");
  const json side = json::parse(s);
  const Eigen::Index rows = side.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = side.at("cols").get<Eigen::Index>();
  std::ifstream f(stem + ".bin", std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + stem + ".bin");
  RMatrix m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (Eigen::Index i = 0; i < rows; ++i) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated " + stem + ".bin");
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

VelocitySlice velocity_slice(const RangeDopplerMap& rdm, double distance) {
  const int nr = rdm.n_range();
  const int row = ((static_cast<int>(std::lround(rdm.row_of(distance))) % nr) + nr) % nr;
  const Eigen::VectorXd p = rdm.complex_map.row(row).cwiseAbs2().transpose();
  const double mx = p.maxCoeff();
  VelocitySlice s;
  for (int j = 0; j < rdm.n_doppler(); ++j) {
    s.velocity.push_back(rdm.velocity_at(j));
    s.power_db.push_back(mx > 0.0 ? db10(p(j) / mx) : -kInf);
  }
  return s;
}

std::vector<std::string> export_artifacts(const RunRecord& record, const RunArtifacts& artifacts,
                                          const ExportFlags& flags) {
  if (flags.rdm_format != "csv" && flags.rdm_format != "bin")
    throw std::invalid_argument("rdm format must be csv or bin");
  const fs::path dir(flags.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  const std::string& hash = record.config_hash;
  std::vector<std::string> written;

  std::vector<std::pair<std::string, const RangeDopplerMap*>> maps = {
      {"uncompensated", &artifacts.uncompensated}, {"baseline", &artifacts.baseline}};
  for (std::size_t i = 0; i < record.filters.size() && i < artifacts.compensated.size(); ++i)
    if (record.filters[i].ok) maps.push_back({"compensated_" + record.filters[i].method, &artifacts.compensated[i]});

  if (flags.rdm)
    for (const auto& [name, map] : maps) {
      const std::string stem = (dir / ("rdm_" + name)).string();
      if (flags.rdm_format == "csv") {
        write_rdm_csv(stem + ".csv", *map, hash);
        written.push_back(stem + ".csv");
      } else {
        write_rdm_binary(stem, *map, hash);
        written.push_back(stem + ".bin");
        written.push_back(stem + ".json");
      }
    }

  if (flags.velocity_slices && !artifacts.relax_peaks.empty()) {
    const double leak = artifacts.relax_peaks.front().distance;
    for (const auto& [name, map] : maps) {
      const fs::path p = dir / ("velocity_slice_" + name + ".csv");
      const VelocitySlice s = velocity_slice(*map, leak);
      std::ofstream f = open_out(p);
      f << "# config_hash=" << hash << "\n# distance_m=" << g17(leak) << "\n";
      f << "velocity_mps,power_db\n";
      for (std::size_t j = 0; j < s.velocity.size(); ++j)
        f << g17(s.velocity[j]) << ',' << g17(s.power_db[j]) << '\n';
      close_checked(f, p);
      written.push_back(p.string());
    }
  }

  if (flags.traces)
    for (const auto& fo : record.filters) {
      if (!fo.ok) continue;
      const fs::path p = dir / ("trace_" + fo.method + ".csv");
      std::ofstream f = open_out(p);
      f << "# config_hash=" << hash << "\niteration,abs_error\n";
      for (std::size_t i = 0; i < fo.trace.size(); ++i) f << i << ',' << g17(fo.trace[i]) << '\n';
      close_checked(f, p);
      written.push_back(p.string());
    }

  if (flags.metrics) {
    const fs::path p = dir / "metrics.csv";
    std::ofstream f = open_out(p);
    f << "# config_hash=" << hash << "\n";
    f << "path,ok,sfdr_n_db,mse_db,mean_amp_error,mean_phase_error_deg,isr_db,evm_tx,evm_rx,"
         "iterations,converged\n";
    auto row = [&](const std::string& name, bool ok, const MetricsReport& m, int it, bool conv) {
      f << name << ',' << (ok ? 1 : 0) << ',';
      if (ok) {
        f << (m.sfdr_n_db ? g17(*m.sfdr_n_db) : "nan") << ',' << g17(m.mse_db) << ','
          << g17(m.mean_amp_error) << ',' << g17(m.mean_phase_error) << ',' << g17(m.isr_db) << ','
          << g17(m.evm_tx) << ',' << g17(m.evm_rx) << ',' << it << ',' << (conv ? 1 : 0) << '\n';
      } else {
        f << "nan,nan,nan,nan,nan,nan,nan," << it << ",0\n";
      }
    };
    row("uncompensated", true, record.uncompensated, 0, true);
    row("baseline", true, record.baseline, 0, true);
    for (const auto& fo : record.filters)
      row("compensated_" + fo.method, fo.ok, fo.metrics, fo.iterations, fo.converged);
    close_checked(f, p);
    written.push_back(p.string());

    const fs::path pj = dir / "run.json";
    std::ofstream fj = open_out(pj);
    fj << record_to_json(record).dump(2) << "\n";
    close_checked(fj, pj);
    written.push_back(pj.string());
  }
  return written;
}

}  // namespace iqjcas::harness
