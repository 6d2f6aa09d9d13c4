#include "iqjcas/harness/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <exception>

namespace iqjcas::harness {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t { kGrid = 1, kNoise = 2, kPhases = 3, kSnr = 4 };

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PathResult {
  MetricsReport report;
  Eigen::VectorXcd amplitudes;
  RangeDopplerMap rdm;
};

PathResult evaluate_path(const ChannelMatrix& h, const ExperimentConfig& c,
                         const std::vector<KnownObject>& all, const std::vector<KnownObject>& objs,
                         const Eigen::VectorXcd& a_true) {
  const DetectionOptions& d = c.detection;
  PathResult out;
  out.rdm = compute_rdm(h, d.pad, d.pad, d.window);
  MetricsReport& m = out.report;
  m.sfdr_n_db = sfdr_n(out.rdm, all, d.exclusion_bins);
  for (const auto& o : objs) m.sfdr_g_db.push_back(sfdr_g(out.rdm, o, d.ghost_tol_bins));
  out.amplitudes = object_amplitudes(h, objs);
  if (!objs.empty()) {
    m.mse_db = amplitude_mse(a_true, out.amplitudes);
    auto [eps, phi] = amplitude_phase_errors(a_true, out.amplitudes);
    m.mean_amp_error = eps;
    m.mean_phase_error = phi;
  }
  m.isr_db = isr(c.imbalance);
  m.evm_tx = evm(c.imbalance.tx);
  m.evm_rx = evm(c.imbalance.rx);
  return out;
}

json optional_db(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

json finite_or_text(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json amplitudes_json(const Eigen::VectorXcd& a) {
  json out = json::array();
  for (Eigen::Index i = 0; i < a.size(); ++i) out.push_back({a(i).real(), a(i).imag()});
  return out;
}

}  // namespace

Scenario run_scenario(const ExperimentConfig& c, std::uint64_t seed, double snr_db) {
  Scenario s = c.scenario;
  s.snr_db = snr_db;
  s.seed = stable_hash(seed, kNoise);
  if (c.randomize_phases) {
    Rng rng(stable_hash(seed, kPhases));
    for (auto& r : s.reflectors) r.phase = rng.uniform(0.0, kTwoPi);
  }
  return s;
}

double run_snr(const ExperimentConfig& c, std::uint64_t seed, std::size_t snr_index) {
  if (c.snr_uniform) return Rng(stable_hash(seed, kSnr)).uniform(c.snr_min, c.snr_max);
  return c.snr_sweep.at(snr_index);
}

RunRecord run_pipeline(const ExperimentConfig& c, std::uint64_t seed, double snr_db,
                       RunArtifacts* artifacts) {
  const auto t0 = std::chrono::steady_clock::now();
  c.validate();
  const OfdmConfig& cfg = c.ofdm;
  const DetectionOptions& d = c.detection;
  RunRecord rec;
  rec.seed = seed;
  rec.snr_db = snr_db;
  rec.config_hash = hash_hex(config_hash(c));

  const Scenario scn = run_scenario(c, seed, snr_db);
  const ResourceGrid x = generate_grid(cfg, c.modulation_order, stable_hash(seed, kGrid));
  const ChannelMatrix h = synthesize_channel(scn, cfg);
  const CMatrix noise = scenario_noise(scn, cfg);

  const ResourceGrid y = afflicted_rx_grid(x, h, c.imbalance, noise);
  const ResourceGrid y_base = afflicted_rx_grid(x, h, ideal_pair(), noise);
  const ChannelMatrix h_iq = zero_edge_subcarriers(estimate_channel(y, x));
  const ChannelMatrix h_base = zero_edge_subcarriers(estimate_channel(y_base, x));

  const std::vector<KnownObject> all = known_objects(scn, true);
  const std::vector<KnownObject> objs = known_objects(scn, false);
  rec.a_true = object_amplitudes(zero_edge_subcarriers(h), objs);

  PathResult unc = evaluate_path(h_iq, c, all, objs, rec.a_true);
  PathResult base = evaluate_path(h_base, c, all, objs, rec.a_true);
  rec.uncompensated = unc.report;
  rec.baseline = base.report;
  rec.a_uncompensated = unc.amplitudes;
  rec.a_baseline = base.amplitudes;

  // detection and parametric channel model on the afflicted channel
  const std::vector<Cell> cells =
      cfar_detect(unc.rdm, d.cfar_guard, d.cfar_training, d.cfar_threshold_db);
  const std::vector<PeakEstimate> peaks =
      flag_ghosts(peaks_from_cells(unc.rdm, cells), unc.rdm, d.ghost_range_tol_bins,
                  d.ghost_power_gap_db);
  rec.n_detections = static_cast<int>(peaks.size());
  const int real_peaks = static_cast<int>(
      std::count_if(peaks.begin(), peaks.end(), [](const auto& p) { return !p.is_ghost_candidate; }));
  rec.n_components =
      d.n_components > 0 ? d.n_components : std::clamp(real_peaks, 1, d.max_components);
  const RelaxResult relax = relax_estimate(h_iq, rec.n_components);
  rec.relax_converged = relax.converged;
  const ChannelMatrix h_tilde = reconstruct_channel(relax.peaks, cfg);
  const std::vector<SystemSample> samples = build_samples(h_iq, h_tilde, x, c.estimation_symbols);

  if (artifacts) {
    artifacts->uncompensated = unc.rdm;
    artifacts->baseline = base.rdm;
    artifacts->compensated.clear();
    artifacts->relax_peaks = relax.peaks;
  }

  for (const FilterConfig& fc0 : c.filters) {
    const auto tf = std::chrono::steady_clock::now();
    FilterOutcome out;
    out.method = to_string(fc0.method);
    Eigen::VectorXcd amps = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(objs.size()));
    RangeDopplerMap map;
    try {
      FilterConfig fc = fc0;
      fc.n_stats = std::min<int>(fc.n_stats, static_cast<int>(samples.size()));
      const BilinearEstimate est = run_filter(samples, fc);
      out.converged = est.converged;
      out.iterations = est.iterations;
      out.residual = relative_residual(est, samples);
      out.op_counts = est.op_counts;
      out.trace.reserve(est.error_trace.size());
      for (const cd e : est.error_trace) out.trace.push_back(std::abs(e));
      out.params = CompensationParams::from_estimate(canonicalize(est));
      const CompensatedChannel hc = compensated_channel(y, x, out.params);
      PathResult comp = evaluate_path(hc.h, c, all, objs, rec.a_true);
      out.metrics = comp.report;
      amps = comp.amplitudes;
      map = std::move(comp.rdm);
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
    out.seconds = seconds_since(tf);
    rec.filters.push_back(std::move(out));
    rec.a_filters.push_back(amps);
    if (artifacts) artifacts->compensated.push_back(std::move(map));
  }
  rec.seconds = seconds_since(t0);
  return rec;
}

RunRecord run_single(const ExperimentConfig& c, std::size_t run, std::size_t snr_index,
                     RunArtifacts* artifacts) {
  const std::uint64_t seed = run_seed(c.master_seed, run, snr_index);
  RunRecord r = run_pipeline(c, seed, run_snr(c, seed, snr_index), artifacts);
  r.run_id = run;
  r.snr_index = snr_index;
  return r;
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
  json g = json::array();
  for (const auto& v : m.sfdr_g_db) g.push_back(optional_db(v));
  return {{"sfdr_n_db", optional_db(m.sfdr_n_db)},
          {"sfdr_g_db", g},
          {"mse_db", finite_or_text(m.mse_db)},
          {"mean_amp_error", finite_or_text(m.mean_amp_error)},
          {"mean_phase_error_deg", finite_or_text(m.mean_phase_error)},
          {"isr_db", finite_or_text(m.isr_db)},
          {"evm_tx", m.evm_tx},
          {"evm_rx", m.evm_rx}};
}

nlohmann::json record_to_json(const RunRecord& r) {
  json filters = json::array();
  for (std::size_t i = 0; i < r.filters.size(); ++i) {
    const FilterOutcome& f = r.filters[i];
    json e = {{"method", f.method}, {"ok", f.ok}, {"seconds", f.seconds}};
    if (!f.ok) {
      e["error"] = f.error;
    } else {
      e["metrics"] = metrics_to_json(f.metrics);
      e["converged"] = f.converged;
      e["iterations"] = f.iterations;
      e["relative_residual"] = finite_or_text(f.residual);
      e["alpha_tx"] = {f.params.alpha_tx_hat.real(), f.params.alpha_tx_hat.imag()};
      e["beta_tx"] = {f.params.beta_tx_hat.real(), f.params.beta_tx_hat.imag()};
      e["alpha_rx"] = {f.params.alpha_rx_hat.real(), f.params.alpha_rx_hat.imag()};
      e["beta_rx"] = {f.params.beta_rx_hat.real(), f.params.beta_rx_hat.imag()};
      e["op_counts"] = {{"additions", f.op_counts.real_additions},
                        {"multiplications", f.op_counts.real_multiplications},
                        {"divisions", f.op_counts.real_divisions}};
      e["amplitudes"] = amplitudes_json(r.a_filters[i]);
    }
    filters.push_back(e);
  }
  return {{"run_id", r.run_id},
          {"snr_index", r.snr_index},
          {"snr_db", finite_or_text(r.snr_db)},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"n_detections", r.n_detections},
          {"n_components", r.n_components},
          {"relax_converged", r.relax_converged},
          {"seconds", r.seconds},
          {"amplitudes_true", amplitudes_json(r.a_true)},
          {"uncompensated", {{"metrics", metrics_to_json(r.uncompensated)},
                             {"amplitudes", amplitudes_json(r.a_uncompensated)}}},
          {"baseline", {{"metrics", metrics_to_json(r.baseline)},
                        {"amplitudes", amplitudes_json(r.a_baseline)}}},
          {"filters", filters}};
}

}  // namespace iqjcas::harness
