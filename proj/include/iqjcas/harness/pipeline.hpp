#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../bilinear_estimators.hpp"
#include "../compensation.hpp"
#include "../metrics.hpp"
#include "../radar_processing.hpp"
#include "config.hpp"

namespace iqjcas::harness {

struct FilterOutcome {
  std::string method;
  bool ok = false;
  std::string error;  // empty when ok
  MetricsReport metrics;
  CompensationParams params;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // relative model residual on the samples
  std::vector<double> trace;  // |error| per iteration or sample
  OpCounter op_counts;
  double seconds = 0.0;
};

struct RunRecord {
  std::size_t run_id = 0;
  std::size_t snr_index = 0;
  double snr_db = kInf;
  std::uint64_t seed = 0;
  std::string config_hash;
  int n_detections = 0;
  int n_components = 0;
  bool relax_converged = true;
  MetricsReport uncompensated;
  MetricsReport baseline;
  std::vector<FilterOutcome> filters;
  // object amplitudes on the reference channel and each path, objects without leakage
  Eigen::VectorXcd a_true;
  Eigen::VectorXcd a_uncompensated;
  Eigen::VectorXcd a_baseline;
  std::vector<Eigen::VectorXcd> a_filters;
  double seconds = 0.0;
};

// Maps and traces kept for export.
struct RunArtifacts {
  RangeDopplerMap uncompensated;
  RangeDopplerMap baseline;
  std::vector<RangeDopplerMap> compensated;  // parallel to RunRecord::filters, empty map on failure
  std::vector<PeakEstimate> relax_peaks;
};

// Scenario of one run: configured reflectors, phases drawn uniformly when enabled.
Scenario run_scenario(const ExperimentConfig& c, std::uint64_t seed, double snr_db);

// SNR of (run, snr_index): the sweep value or a uniform draw.
double run_snr(const ExperimentConfig& c, std::uint64_t seed, std::size_t snr_index);

RunRecord run_pipeline(const ExperimentConfig& c, std::uint64_t seed, double snr_db,
                       RunArtifacts* artifacts = nullptr);

RunRecord run_single(const ExperimentConfig& c, std::size_t run, std::size_t snr_index,
                     RunArtifacts* artifacts = nullptr);

nlohmann::json metrics_to_json(const MetricsReport& m);
nlohmann::json record_to_json(const RunRecord& r);

}  // namespace iqjcas::harness
