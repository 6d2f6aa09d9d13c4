#include "iqjcas/harness/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace iqjcas::harness {

namespace fs = std::filesystem;

Summary summarize(const std::vector<double>& values) {
  Summary s;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++s.count;
    }
  if (s.count == 0) return s;
  s.mean = sum / s.count;
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values)
      if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(ss / (s.count - 1) / s.count);
  }
  return s;
}

namespace {

// 10 log10 of the mean |A - A_hat|^2 over the stacked amplitude vectors
double pooled_mse(const std::vector<const Eigen::VectorXcd*>& truth,
                  const std::vector<const Eigen::VectorXcd*>& est) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sum += (*truth[i] - *est[i]).squaredNorm();
    n += static_cast<std::size_t>(truth[i]->size());
  }
  if (n == 0 || sum <= 0.0) return kMseFloorDb;
  return std::max(db10(sum / static_cast<double>(n)), kMseFloorDb);
}

std::string snr_label(const ExperimentConfig& c, std::size_t idx) {
  char buf[64];
  if (c.snr_uniform) {
    std::snprintf(buf, sizeof buf, "uniform:%g:%g", c.snr_min, c.snr_max);
  } else if (std::isinf(c.snr_sweep[idx])) {
    return "inf";
  } else {
    std::snprintf(buf, sizeof buf, "%g", c.snr_sweep[idx]);
  }
  return buf;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::vector<AggregateRow> aggregate(const ExperimentConfig& c, const std::vector<RunRecord>& runs) {
  std::vector<AggregateRow> rows;
  for (std::size_t si = 0; si < c.n_snr(); ++si) {
    std::vector<const RunRecord*> group;
    for (const auto& r : runs)
      if (r.snr_index == si) group.push_back(&r);
    std::sort(group.begin(), group.end(),
              [](const RunRecord* a, const RunRecord* b) { return a->run_id < b->run_id; });

    std::vector<double> unc_n, base_n;
    std::vector<const Eigen::VectorXcd*> truth, unc_a, base_a;
    for (const RunRecord* r : group) {
      unc_n.push_back(r->uncompensated.sfdr_n_db.value_or(kNaN));
      base_n.push_back(r->baseline.sfdr_n_db.value_or(kNaN));
      truth.push_back(&r->a_true);
      unc_a.push_back(&r->a_uncompensated);
      base_a.push_back(&r->a_baseline);
    }

    for (std::size_t fi = 0; fi < c.filters.size(); ++fi) {
      AggregateRow row;
      row.snr_index = si;
      row.snr_label = snr_label(c, si);
      row.filter = to_string(c.filters[fi].method);
      row.uncompensated_sfdr_n_db = summarize(unc_n);
      row.baseline_sfdr_n_db = summarize(base_n);
      row.uncompensated_mse_db = pooled_mse(truth, unc_a);
      row.baseline_mse_db = pooled_mse(truth, base_a);

      std::vector<double> sn, sg;
      std::vector<const Eigen::VectorXcd*> t_ok, a_ok;
      double amp = 0.0, phase = 0.0, conv = 0.0, iters = 0.0;
      for (const RunRecord* r : group) {
        const FilterOutcome& f = r->filters.at(fi);
        if (!f.ok) {
          ++row.n_failed;
          continue;
        }
        ++row.n_ok;
        sn.push_back(f.metrics.sfdr_n_db.value_or(kNaN));
        for (const auto& g : f.metrics.sfdr_g_db)
          if (g) sg.push_back(*g);
        t_ok.push_back(&r->a_true);
        a_ok.push_back(&r->a_filters.at(fi));
        amp += f.metrics.mean_amp_error;
        phase += f.metrics.mean_phase_error;
        conv += f.converged ? 1.0 : 0.0;
        iters += f.iterations;
      }
      row.sfdr_n_db = summarize(sn);
      row.sfdr_g_db = summarize(sg);
      if (row.n_ok > 0) {
        row.mse_db = pooled_mse(t_ok, a_ok);
        row.mean_amp_error = amp / row.n_ok;
        row.mean_phase_error = phase / row.n_ok;
        row.converged_fraction = conv / row.n_ok;
        row.mean_iterations = iters / row.n_ok;
      } else {
        row.mse_db = kNaN;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

SweepResult run_sweep(const ExperimentConfig& c, int threads, const ProgressFn& progress) {
  c.validate();
  const std::size_t n_snr = c.n_snr();
  const std::size_t runs = static_cast<std::size_t>(c.n_runs);
  const std::size_t total = n_snr * runs;
  SweepResult out;
  out.config_hash = hash_hex(config_hash(c));
  out.runs.resize(total);

  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(total)));

  std::atomic<std::size_t> next{0}, done{0};
  std::mutex mu;
  std::exception_ptr hard_error;
  auto work = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= total) return;
      try {
        out.runs[t] = run_single(c, t % runs, t / runs);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!hard_error) hard_error = std::current_exception();
        next.store(total);
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(mu);
        progress(d, total);
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (hard_error) std::rethrow_exception(hard_error);
  out.rows = aggregate(c, out.runs);
  return out;
}

std::string aggregate_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "# config_hash=" << r.config_hash << "\n";
  os << "snr_db,filter,n_ok,n_failed,sfdr_n_db,sfdr_n_stderr_db,sfdr_g_db,sfdr_g_stderr_db,"
        "mse_db,mean_amp_error,mean_phase_error_deg,converged_fraction,mean_iterations,"
        "uncompensated_sfdr_n_db,uncompensated_sfdr_n_stderr_db,baseline_sfdr_n_db,"
        "baseline_sfdr_n_stderr_db,uncompensated_mse_db,baseline_mse_db\n";
  for (const auto& w : r.rows) {
    os << w.snr_label << ',' << w.filter << ',' << w.n_ok << ',' << w.n_failed << ','
       << num(w.sfdr_n_db.mean) << ',' << num(w.sfdr_n_db.stderr_) << ',' << num(w.sfdr_g_db.mean)
       << ',' << num(w.sfdr_g_db.stderr_) << ',' << num(w.mse_db) << ',' << num(w.mean_amp_error)
       << ',' << num(w.mean_phase_error) << ',' << num(w.converged_fraction) << ','
       << num(w.mean_iterations) << ',' << num(w.uncompensated_sfdr_n_db.mean) << ','
       << num(w.uncompensated_sfdr_n_db.stderr_) << ',' << num(w.baseline_sfdr_n_db.mean) << ','
       << num(w.baseline_sfdr_n_db.stderr_) << ',' << num(w.uncompensated_mse_db) << ','
       << num(w.baseline_mse_db) << '\n';
  }
  return os.str();
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + p.string());
}

}  // namespace

void write_sweep(const SweepResult& r, const ExperimentConfig& c, const std::string& directory) {
  const fs::path dir(directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "aggregate.csv", aggregate_csv(r));
  nlohmann::json cfg = config_to_json(c);
  cfg["config_hash"] = r.config_hash;
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  if (!c.outputs.write_runs) return;
  fs::create_directories(dir / "runs", ec);
  if (ec) throw std::runtime_error("cannot create " + (dir / "runs").string() + ": " + ec.message());
  for (const auto& run : r.runs) {
    char name[64];
    std::snprintf(name, sizeof name, "run_%03zu_%04zu.json", run.snr_index, run.run_id);
    write_text(dir / "runs" / name, record_to_json(run).dump(2) + "\n");
  }
}

}  // namespace iqjcas::harness
