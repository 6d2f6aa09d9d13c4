#pragma once

#include <functional>
#include <string>
#include <vector>

#include "config.hpp"
#include "pipeline.hpp"

namespace iqjcas::harness {

// mean and standard error over the finite samples
struct Summary {
  double mean = 0.0;
  double stderr_ = 0.0;
  int count = 0;
};

Summary summarize(const std::vector<double>& values);

struct AggregateRow {
  std::size_t snr_index = 0;
  std::string snr_label;  // sweep value in dB, or "uniform:min:max"
  std::string filter;
  int n_ok = 0;
  int n_failed = 0;
  Summary sfdr_n_db;
  Summary sfdr_g_db;  // over all movable objects of all runs
  double mse_db = kMseFloorDb;  // pooled over objects and runs
  double mean_amp_error = 0.0;
  double mean_phase_error = 0.0;
  double converged_fraction = 0.0;
  double mean_iterations = 0.0;
  Summary uncompensated_sfdr_n_db;
  Summary baseline_sfdr_n_db;
  double uncompensated_mse_db = kMseFloorDb;
  double baseline_mse_db = kMseFloorDb;
};

struct SweepResult {
  std::string config_hash;
  std::vector<RunRecord> runs;  // ordered by (snr_index, run_id)
  std::vector<AggregateRow> rows;  // ordered by (snr_index, filter order)
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// threads = 0 picks the hardware concurrency
SweepResult run_sweep(const ExperimentConfig& c, int threads = 0, const ProgressFn& progress = {});

std::vector<AggregateRow> aggregate(const ExperimentConfig& c, const std::vector<RunRecord>& runs);

std::string aggregate_csv(const SweepResult& r);

// aggregate.csv plus runs/run_<snr>_<run>.json when enabled
void write_sweep(const SweepResult& r, const ExperimentConfig& c, const std::string& directory);

}  // namespace iqjcas::harness
