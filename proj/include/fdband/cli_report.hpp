#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdband/calibration.hpp"
#include "fdband/serialize.hpp"

namespace fdband {

/// Exit code of `verify` when a probe criterion fails.
inline constexpr int kExitVerificationFailed = 8;

struct NominalSpec {
  std::optional<double> mean;
  std::optional<double> variance;
  std::optional<std::filesystem::path> csv;
};

/// Either scaled bounds [a p, b p] or explicit CSV bounds.
struct BandSpec {
  std::optional<double> a;
  std::optional<double> b;
  std::optional<std::filesystem::path> lower_csv;
  std::optional<std::filesystem::path> upper_csv;
};

struct VerifySettings {
  long long probe_count = 1000;
  std::size_t product_grid = 256;
  long long product_count = 500;
  int product_n = 2;
  int oracle_instances = 10;
  int oracle_resolution = 200;
};

struct SimulateSettings {
  int n_samples = 1;
  long long trials = 100000;
  std::optional<double> threshold;
  int sampled_pairs = 5;
};

struct RunConfig {
  NominalSpec nominal0;
  NominalSpec nominal1;
  std::string family0 = "kl";
  std::string family1 = "kl";
  double epsilon0 = 0.0;
  double epsilon1 = 0.0;
  double lambda = 1.0;
  std::optional<double> x_min, x_max;
  std::optional<std::size_t> n;
  SolverOptions solver;
  CalibrationOptions calibration;
  std::uint64_t seed = 7;
  std::optional<std::filesystem::path> output_dir;
  std::optional<BandSpec> band0;
  std::optional<BandSpec> band1;
  VerifySettings verify;
  SimulateSettings simulate;
};

/// Parses a config object; relative CSV paths resolve against `base_dir`.
RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Flag, then config, then the FDBAND_OUTPUT_DIR environment variable, then
/// "fdband_out".
std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag, const RunConfig& cfg);

/// Nominal pair on the configured grid.
std::pair<GriddedDensity, GriddedDensity> build_nominals(const RunConfig& cfg);
std::pair<UncertaintyBall, UncertaintyBall> build_balls(const RunConfig& cfg);

struct RunArtifact {
  std::optional<CalibrationResult> calibration;
  std::filesystem::path report_json;
  std::filesystem::path figure_csv;
  std::vector<ProbeReport> probe_reports;
  bool passed = true;
};

RunArtifact cmd_calibrate(const RunConfig& cfg, const std::filesystem::path& out_dir);
RunArtifact cmd_band(const RunConfig& cfg, const std::filesystem::path& out_dir);
RunArtifact cmd_verify(const RunConfig& cfg, const std::filesystem::path& out_dir);
RunArtifact cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace fdband
