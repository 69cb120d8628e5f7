#pragma once

#include <filesystem>

#include <json.hpp>

#include "fdband/band.hpp"
#include "fdband/calibration.hpp"
#include "fdband/robust_test.hpp"
#include "fdband/verification.hpp"

namespace fdband {

using Json = nlohmann::ordered_json;

/// Non-finite values serialize as null.
Json number(double v);

Json to_json(const Grid& grid);
Json to_json(const LFDSolution& sol);
Json to_json(const CalibrationResult& res);
Json to_json(const ContaminationReport& rep);
Json to_json(const ProbeReport& rep);
Json to_json(const SimulationReport& rep);
Json to_json(const BruteForceResult& res);
Json to_json(const ContainmentReport& rep);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

/// Columns x, p0, p1, a0p0, b0p0, a1p1, b1p1, q0, q1; one row per grid point.
void write_figure_csv(const std::filesystem::path& path, const CalibrationResult& res);
/// Columns x, lower0, upper0, lower1, upper1, q0, q1.
void write_band_csv(const std::filesystem::path& path, const BandModel& band0, const BandModel& band1,
                    const LFDSolution& sol);

}  // namespace fdband
