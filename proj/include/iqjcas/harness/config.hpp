#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../bilinear_estimators.hpp"
#include "../channel_sim.hpp"
#include "../iq_imbalance.hpp"
#include "../ofdm_waveform.hpp"
#include "../radar_processing.hpp"

namespace iqjcas::harness {

struct DetectionOptions {
  Window window = Window::blackman_harris;
  int pad = 4;
  int cfar_guard = 8;
  int cfar_training = 8;
  double cfar_threshold_db = 15.0;
  double ghost_range_tol_bins = 2.0;
  double ghost_power_gap_db = 10.0;
  int max_components = 8;
  int n_components = 0;  // fixed RELAX order; 0 uses the CFAR count
  double exclusion_bins = 5.0;
  double ghost_tol_bins = 1.0;
};

struct OutputOptions {
  std::string directory = "out";
  bool write_runs = true;
  std::string rdm_format = "csv";  // csv | bin
};

struct ExperimentConfig {
  std::string profile = "full";
  OfdmConfig ofdm = OfdmConfig::full();
  int modulation_order = 256;
  Scenario scenario = Scenario::reference_scene();
  bool randomize_phases = true;
  std::string imbalance_name = "3gpp";  // preset name or "custom"
  IqPair imbalance = threegpp_pair();
  std::vector<FilterConfig> filters = {FilterConfig::defaults(FilterMethod::awf)};
  std::vector<double> snr_sweep = {50.0};
  bool snr_uniform = false;  // one SNR per run drawn from [snr_min, snr_max]
  double snr_min = 40.0;
  double snr_max = 50.0;
  int n_runs = 1;
  std::uint64_t master_seed = 0;
  std::vector<int> estimation_symbols = {0};
  DetectionOptions detection;
  OutputOptions outputs;
  int threads = 0;

  void validate() const;
  // number of SNR points of a sweep
  std::size_t n_snr() const { return snr_uniform ? 1 : snr_sweep.size(); }
};

// Reference geometry stretched for the small profile: distances x4, speeds x2.
Scenario scaled_reference_scene();

OfdmConfig profile_ofdm(const std::string& profile);
Scenario profile_scenario(const std::string& profile);

ExperimentConfig default_config(const std::string& profile = "full");

// Missing keys take defaults; "profile" selects the OFDM and scenario base.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::string& profile_override = "");
ExperimentConfig load_config(const std::string& path, const std::string& profile_override = "");
nlohmann::json config_to_json(const ExperimentConfig& c);

// fnv1a64 of the canonical JSON, outputs and thread count excluded
std::uint64_t config_hash(const ExperimentConfig& c);
std::string hash_hex(std::uint64_t h);

nlohmann::json filter_to_json(const FilterConfig& f);
FilterConfig filter_from_json(const nlohmann::json& j);

std::uint64_t run_seed(std::uint64_t master, std::size_t run, std::size_t snr_index);

}  // namespace iqjcas::harness
