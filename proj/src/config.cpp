#include "iqjcas/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace iqjcas::harness {

using nlohmann::json;

Scenario scaled_reference_scene() {
  Scenario s = Scenario::reference_scene();
  for (auto& r : s.reflectors) {
    r.distance *= 4.0;
    r.velocity *= 2.0;
  }
  return s;
}

OfdmConfig profile_ofdm(const std::string& profile) {
  if (profile == "full") return OfdmConfig::full();
  if (profile == "small") return OfdmConfig::small();
  throw std::invalid_argument("unknown profile '" + profile + "' (expected full or small)");
}

Scenario profile_scenario(const std::string& profile) {
  if (profile == "full") return Scenario::reference_scene();
  if (profile == "small") return scaled_reference_scene();
  throw std::invalid_argument("unknown profile '" + profile + "' (expected full or small)");
}

ExperimentConfig default_config(const std::string& profile) {
  ExperimentConfig c;
  c.profile = profile;
  c.ofdm = profile_ofdm(profile);
  c.scenario = profile_scenario(profile);
  for (auto& f : c.filters) f.n_stats = c.ofdm.n_subcarriers;
  return c;
}

void ExperimentConfig::validate() const {
  ofdm.validate();
  if (!supported_modulation(modulation_order))
    throw std::invalid_argument("modulation_order must be 4, 16, 64 or 256");
  if (scenario.reflectors.empty()) throw std::invalid_argument("scenario has no reflectors");
  if (n_runs < 1) throw std::invalid_argument("n_runs must be >= 1");
  if (filters.empty()) throw std::invalid_argument("at least one filter is required");
  for (const auto& f : filters) f.validate();
  if (snr_uniform) {
    if (!(snr_min <= snr_max)) throw std::invalid_argument("snr_min must not exceed snr_max");
  } else if (snr_sweep.empty()) {
    throw std::invalid_argument("snr_sweep is empty");
  }
  if (estimation_symbols.empty()) throw std::invalid_argument("estimation_symbols is empty");
  for (int l : estimation_symbols)
    if (l < 0 || l >= ofdm.n_symbols)
      throw std::invalid_argument("estimation symbol out of range: " + std::to_string(l));
  if (detection.pad < 1) throw std::invalid_argument("detection.pad must be >= 1");
  if (detection.max_components < 1)
    throw std::invalid_argument("detection.max_components must be >= 1");
  if (detection.n_components < 0) throw std::invalid_argument("detection.n_components must be >= 0");
  if (outputs.rdm_format != "csv" && outputs.rdm_format != "bin")
    throw std::invalid_argument("outputs.rdm_format must be csv or bin");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
}

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json cd_to_json(cd z) { return json::array({z.real(), z.imag()}); }

cd cd_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("complex value must be [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

IqParams iq_from_json(const json& j) {
  double eps = 0.0, phi = 0.0;
  take(j, "epsilon", eps);
  if (j.contains("delta_phi_deg")) phi = deg2rad(j.at("delta_phi_deg").get<double>());
  take(j, "delta_phi", phi);
  return fid_params(eps, phi);
}

json iq_to_json(const IqParams& p) {
  return {{"epsilon", p.epsilon}, {"delta_phi", p.delta_phi}};
}

}  // namespace

nlohmann::json filter_to_json(const FilterConfig& f) {
  return {{"method", to_string(f.method)},
          {"mu_f", f.mu_f},
          {"mu_g", f.mu_g},
          {"mu_iwf", f.mu_iwf},
          {"alpha_h", f.alpha_h},
          {"alpha_g", f.alpha_g},
          {"delta_h", f.delta_h},
          {"delta_g", f.delta_g},
          {"lambda_forget", f.lambda_forget},
          {"p_init", f.p_init},
          {"n_stats", f.n_stats},
          {"max_iterations", f.max_iterations},
          {"tolerance", f.tolerance},
          {"f_init", {cd_to_json(f.f_init(0)), cd_to_json(f.f_init(1))}},
          {"g_init", {f.g_init(0), f.g_init(1), f.g_init(2), f.g_init(3)}},
          {"divergence_threshold", f.divergence_threshold},
          {"covariance_limit", f.covariance_limit}};
}

FilterConfig filter_from_json(const nlohmann::json& j) {
  if (j.is_string()) return FilterConfig::defaults(filter_method_from_string(j.get<std::string>()));
  if (!j.is_object()) throw std::invalid_argument("filter entry must be a name or an object");
  FilterConfig f = FilterConfig::defaults(
      filter_method_from_string(j.value("method", std::string("awf"))));
  take(j, "mu_f", f.mu_f);
  take(j, "mu_g", f.mu_g);
  take(j, "mu_iwf", f.mu_iwf);
  take(j, "alpha_h", f.alpha_h);
  take(j, "alpha_g", f.alpha_g);
  take(j, "delta_h", f.delta_h);
  take(j, "delta_g", f.delta_g);
  take(j, "lambda_forget", f.lambda_forget);
  take(j, "p_init", f.p_init);
  take(j, "n_stats", f.n_stats);
  take(j, "max_iterations", f.max_iterations);
  take(j, "tolerance", f.tolerance);
  take(j, "divergence_threshold", f.divergence_threshold);
  take(j, "covariance_limit", f.covariance_limit);
  if (j.contains("f_init")) {
    const json& v = j.at("f_init");
    if (!v.is_array() || v.size() != 2) throw std::invalid_argument("f_init needs 2 entries");
    f.f_init << cd_from_json(v[0]), cd_from_json(v[1]);
  }
  if (j.contains("g_init")) {
    const auto v = j.at("g_init").get<std::vector<double>>();
    if (v.size() != 4) throw std::invalid_argument("g_init needs 4 entries");
    f.g_init << v[0], v[1], v[2], v[3];
  }
  return f;
}

ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& profile_override) {
  if (!j.is_object()) throw std::invalid_argument("config document must be a JSON object");
  std::string profile = j.value("profile", std::string("full"));
  if (!profile_override.empty()) profile = profile_override;
  ExperimentConfig c = default_config(profile);

  if (j.contains("ofdm")) {
    const json& o = j.at("ofdm");
    take(o, "numerology_mu", c.ofdm.numerology_mu);
    take(o, "n_subcarriers", c.ofdm.n_subcarriers);
    take(o, "n_symbols", c.ofdm.n_symbols);
    take(o, "fft_size", c.ofdm.fft_size);
    take(o, "cp_samples", c.ofdm.cp_samples);
    take(o, "carrier_frequency", c.ofdm.carrier_frequency);
  }
  take(j, "modulation_order", c.modulation_order);

  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    if (s.contains("reflectors")) {
      c.scenario.reflectors.clear();
      for (const json& r : s.at("reflectors")) {
        Reflector ref;
        take(r, "distance", ref.distance);
        take(r, "velocity", ref.velocity);
        take(r, "power_db", ref.power_db);
        take(r, "phase", ref.phase);
        c.scenario.reflectors.push_back(ref);
      }
    }
    take(s, "randomize_phases", c.randomize_phases);
  }

  if (j.contains("imbalance")) {
    const json& im = j.at("imbalance");
    if (im.is_string()) {
      c.imbalance_name = im.get<std::string>();
      c.imbalance = imbalance_preset(c.imbalance_name);
    } else if (im.is_object()) {
      c.imbalance_name = "custom";
      c.imbalance = ideal_pair();
      if (im.contains("tx")) c.imbalance.tx = iq_from_json(im.at("tx"));
      if (im.contains("rx")) c.imbalance.rx = iq_from_json(im.at("rx"));
    } else {
      throw std::invalid_argument("imbalance must be a preset name or {tx, rx}");
    }
  }

  if (j.contains("filters")) {
    c.filters.clear();
    for (const json& f : j.at("filters")) {
      c.filters.push_back(filter_from_json(f));
      if (!(f.is_object() && f.contains("n_stats"))) c.filters.back().n_stats = c.ofdm.n_subcarriers;
    }
  } else {
    for (auto& f : c.filters) f.n_stats = c.ofdm.n_subcarriers;
  }

  if (j.contains("snr_sweep")) {
    const json& s = j.at("snr_sweep");
    if (s.is_object()) {
      c.snr_uniform = true;
      take(s, "min", c.snr_min);
      take(s, "max", c.snr_max);
    } else {
      c.snr_sweep.clear();
      for (const json& v : s)
        c.snr_sweep.push_back(v.is_string() && v.get<std::string>() == "inf" ? kInf
                                                                               : v.get<double>());
    }
  }
  take(j, "n_runs", c.n_runs);
  take(j, "master_seed", c.master_seed);
  take(j, "estimation_symbols", c.estimation_symbols);
  take(j, "threads", c.threads);

  if (j.contains("detection")) {
    const json& d = j.at("detection");
    if (d.contains("window")) c.detection.window = window_from_string(d.at("window").get<std::string>());
    take(d, "pad", c.detection.pad);
    take(d, "cfar_guard", c.detection.cfar_guard);
    take(d, "cfar_training", c.detection.cfar_training);
    take(d, "cfar_threshold_db", c.detection.cfar_threshold_db);
    take(d, "ghost_range_tol_bins", c.detection.ghost_range_tol_bins);
    take(d, "ghost_power_gap_db", c.detection.ghost_power_gap_db);
    take(d, "max_components", c.detection.max_components);
    take(d, "n_components", c.detection.n_components);
    take(d, "exclusion_bins", c.detection.exclusion_bins);
    take(d, "ghost_tol_bins", c.detection.ghost_tol_bins);
  }
  if (j.contains("outputs")) {
    const json& o = j.at("outputs");
    take(o, "directory", c.outputs.directory);
    take(o, "write_runs", c.outputs.write_runs);
    take(o, "rdm_format", c.outputs.rdm_format);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::string& profile_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  return config_from_json(j, profile_override);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json refl = json::array();
  for (const auto& r : c.scenario.reflectors)
    refl.push_back({{"distance", r.distance},
                    {"velocity", r.velocity},
                    {"power_db", r.power_db},
                    {"phase", r.phase}});
  json filters = json::array();
  for (const auto& f : c.filters) filters.push_back(filter_to_json(f));
  json snr;
  if (c.snr_uniform) {
    snr = {{"min", c.snr_min}, {"max", c.snr_max}};
  } else {
    snr = json::array();
    for (double v : c.snr_sweep) snr.push_back(std::isinf(v) ? json("inf") : json(v));
  }
  json imb = c.imbalance_name == "custom"
                 ? json{{"tx", iq_to_json(c.imbalance.tx)}, {"rx", iq_to_json(c.imbalance.rx)}}
                 : json(c.imbalance_name);
  return {{"profile", c.profile},
          {"ofdm",
           {{"numerology_mu", c.ofdm.numerology_mu},
            {"n_subcarriers", c.ofdm.n_subcarriers},
            {"n_symbols", c.ofdm.n_symbols},
            {"fft_size", c.ofdm.fft_size},
            {"cp_samples", c.ofdm.cp_samples},
            {"carrier_frequency", c.ofdm.carrier_frequency}}},
          {"modulation_order", c.modulation_order},
          {"scenario", {{"reflectors", refl}, {"randomize_phases", c.randomize_phases}}},
          {"imbalance", imb},
          {"filters", filters},
          {"snr_sweep", snr},
          {"n_runs", c.n_runs},
          {"master_seed", c.master_seed},
          {"estimation_symbols", c.estimation_symbols},
          {"detection",
           {{"window", to_string(c.detection.window)},
            {"pad", c.detection.pad},
            {"cfar_guard", c.detection.cfar_guard},
            {"cfar_training", c.detection.cfar_training},
            {"cfar_threshold_db", c.detection.cfar_threshold_db},
            {"ghost_range_tol_bins", c.detection.ghost_range_tol_bins},
            {"ghost_power_gap_db", c.detection.ghost_power_gap_db},
            {"max_components", c.detection.max_components},
            {"n_components", c.detection.n_components},
            {"exclusion_bins", c.detection.exclusion_bins},
            {"ghost_tol_bins", c.detection.ghost_tol_bins}}},
          {"outputs",
           {{"directory", c.outputs.directory},
            {"write_runs", c.outputs.write_runs},
            {"rdm_format", c.outputs.rdm_format}}},
          {"threads", c.threads}};
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("outputs");
  j.erase("threads");
  return fnv1a64(j.dump());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t run_seed(std::uint64_t master, std::size_t run, std::size_t snr_index) {
  return stable_hash(master, run, snr_index);
}

}  // namespace iqjcas::harness
