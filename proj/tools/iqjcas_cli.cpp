#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "iqjcas/harness/config.hpp"
#include "iqjcas/harness/export.hpp"
#include "iqjcas/harness/pipeline.hpp"
#include "iqjcas/harness/sweep.hpp"

using namespace iqjcas;
using namespace iqjcas::harness;

namespace {

struct CommonOptions {
  std::string config;
  std::string profile;
  std::string out;
  long long seed = -1;
  int threads = -1;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("-p,--profile", o.profile, "full or small")->check(CLI::IsMember({"full", "small"}));
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("-s,--seed", o.seed, "master seed")->check(CLI::NonNegativeNumber);
  app->add_option("-t,--threads", o.threads, "worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? config_from_json(nlohmann::json::object(), o.profile)
                                        : load_config(o.config, o.profile);
  if (o.seed >= 0) c.master_seed = static_cast<std::uint64_t>(o.seed);
  if (o.threads >= 0) c.threads = o.threads;
  if (!o.out.empty()) c.outputs.directory = o.out;
  c.validate();
  return c;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string fmt(double v) { return fmt(std::optional<double>(v)); }

void print_record(const RunRecord& r) {
  std::printf("run %zu  seed %llu  snr %s dB  config %s\n", r.run_id,
              static_cast<unsigned long long>(r.seed), fmt(r.snr_db).c_str(), r.config_hash.c_str());
  std::printf("detections %d  components %d  relax %s  %.2f s\n", r.n_detections, r.n_components,
              r.relax_converged ? "converged" : "not converged", r.seconds);
  std::printf("%-16s %10s %10s %10s %10s\n", "path", "SFDR_N", "MSE", "amp_err", "phase_deg");
  auto line = [](const std::string& name, const MetricsReport& m) {
    std::printf("%-16s %10s %10s %10.2e %10.3f\n", name.c_str(), fmt(m.sfdr_n_db).c_str(),
                fmt(m.mse_db).c_str(), m.mean_amp_error, m.mean_phase_error);
  };
  line("uncompensated", r.uncompensated);
  line("baseline", r.baseline);
  for (const auto& f : r.filters) {
    if (f.ok)
      line(f.method, f.metrics);
    else
      std::printf("%-16s failed: %s\n", f.method.c_str(), f.error.c_str());
  }
}

void list_presets() {
  std::printf("imbalance presets\n");
  std::printf("%-12s %-4s %9s %10s %22s %22s %8s\n", "name", "side", "epsilon", "dphi_deg", "alpha",
              "beta", "EVM_%");
  for (const auto& name : imbalance_preset_names()) {
    const IqPair p = imbalance_preset(name);
    for (const auto& [side, q] : {std::pair{"tx", p.tx}, std::pair{"rx", p.rx}}) {
      char a[48], b[48];
      std::snprintf(a, sizeof a, "%+.4f%+.4fj", q.alpha.real(), q.alpha.imag());
      std::snprintf(b, sizeof b, "%+.4f%+.4fj", q.beta.real(), q.beta.imag());
      std::printf("%-12s %-4s %9.3f %10.2f %22s %22s %8.2f\n", name.c_str(), side, q.epsilon,
                  rad2deg(q.delta_phi), a, b, 100.0 * evm(q));
    }
    std::printf("%-12s ISR %s dB\n", "", fmt(isr(p)).c_str());
  }
  std::printf("\nprofiles\n");
  for (const char* name : {"full", "small"}) {
    const OfdmConfig o = profile_ofdm(name);
    std::printf("%-6s N_sc=%d N_sym=%d fft=%d cp=%d df=%.0f Hz fc=%.3g Hz\n", name, o.n_subcarriers,
                o.n_symbols, o.fft_size, o.cp_samples, o.subcarrier_spacing(), o.carrier_frequency);
    for (const auto& r : profile_scenario(name).reflectors)
      std::printf("       reflector d=%g m v=%g m/s P=%g dB\n", r.distance, r.velocity, r.power_db);
  }
  std::printf("\nfilters: lms nlms rls awf iwf\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IQ imbalance simulation and compensation for OFDM sensing"};
  app.require_subcommand(1);

  CommonOptions run_o, sweep_o, export_o;
  std::size_t run_index = 0, snr_index = 0;
  int sweep_runs = 0;
  bool quiet = false;
  std::string format;

  CLI::App* run = app.add_subcommand("run", "run the pipeline once and print the metrics");
  add_common(run, run_o);
  run->add_option("--run-index", run_index, "run index used for seeding");
  run->add_option("--snr-index", snr_index, "index into the SNR sweep");

  CLI::App* sweep = app.add_subcommand("sweep", "run all SNR points and seeds, write aggregate CSV");
  add_common(sweep, sweep_o);
  sweep->add_option("-n,--runs", sweep_runs, "override n_runs")->check(CLI::PositiveNumber);
  sweep->add_flag("-q,--quiet", quiet, "no progress output");

  CLI::App* exp = app.add_subcommand("export", "run once and write maps, slices, traces, metrics");
  add_common(exp, export_o);
  exp->add_option("--run-index", run_index, "run index used for seeding");
  exp->add_option("--snr-index", snr_index, "index into the SNR sweep");
  exp->add_option("-f,--format", format, "RDM format")->check(CLI::IsMember({"csv", "bin"}));

  CLI::App* presets = app.add_subcommand("presets", "built-in presets");
  presets->require_subcommand(1);
  presets->add_subcommand("list", "list imbalance presets, profiles and filters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const ExperimentConfig c = resolve(run_o);
      if (snr_index >= c.n_snr()) throw std::invalid_argument("--snr-index out of range");
      const RunRecord r = run_single(c, run_index, snr_index);
      print_record(r);
      if (!run_o.out.empty()) {
        ExportFlags f;
        f.directory = run_o.out;
        f.rdm = f.velocity_slices = f.traces = false;
        export_artifacts(r, RunArtifacts{}, f);
      }
    } else if (sweep->parsed()) {
      ExperimentConfig c = resolve(sweep_o);
      if (sweep_runs > 0) c.n_runs = sweep_runs;
      ProgressFn progress;
      if (!quiet)
        progress = [](std::size_t d, std::size_t t) {
          std::fprintf(stderr, "\r%zu/%zu runs", d, t);
          if (d == t) std::fprintf(stderr, "\n");
        };
      const SweepResult r = run_sweep(c, c.threads, progress);
      write_sweep(r, c, c.outputs.directory);
      std::cout << aggregate_csv(r);
    } else if (exp->parsed()) {
      const ExperimentConfig c = resolve(export_o);
      if (snr_index >= c.n_snr()) throw std::invalid_argument("--snr-index out of range");
      RunArtifacts art;
      const RunRecord r = run_single(c, run_index, snr_index, &art);
      ExportFlags f;
      f.directory = c.outputs.directory;
      f.rdm_format = format.empty() ? c.outputs.rdm_format : format;
      for (const auto& p : export_artifacts(r, art, f)) std::cout << p << "\n";
    } else if (presets->parsed()) {
      list_presets();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
