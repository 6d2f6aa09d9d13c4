#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../radar_processing.hpp"
#include "pipeline.hpp"

namespace iqjcas::harness {

struct ExportFlags {
  std::string directory = "out";
  std::string rdm_format = "csv";  // csv | bin
  bool rdm = true;
  bool velocity_slices = true;
  bool traces = true;
  bool metrics = true;
};

// Linear power map. CSV: "# key=value" header lines, then one row per range
// cell. Binary: little-endian float64, row-major, plus <name>.json sidecar.
void write_rdm_csv(const std::string& path, const RangeDopplerMap& rdm, const std::string& hash);
void write_rdm_binary(const std::string& stem, const RangeDopplerMap& rdm, const std::string& hash);
RMatrix read_rdm_csv(const std::string& path);
RMatrix read_rdm_binary(const std::string& stem);

nlohmann::json rdm_axes(const RangeDopplerMap& rdm);

// power along Doppler at the range cell nearest to distance, dB relative to
// the slice maximum
struct VelocitySlice {
  std::vector<double> velocity;
  std::vector<double> power_db;
};
VelocitySlice velocity_slice(const RangeDopplerMap& rdm, double distance);

// returns the written paths
std::vector<std::string> export_artifacts(const RunRecord& record, const RunArtifacts& artifacts,
                                          const ExportFlags& flags);

}  // namespace iqjcas::harness
