#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fdband/band.hpp"
#include "fdband/divergence.hpp"
#include "fdband/grid.hpp"

namespace fdband {

/// {h : D_f(h || nominal) <= epsilon}.
struct UncertaintyBall {
  GriddedDensity nominal;
  DivergenceFamily family;
  double epsilon;
};

/// eta_i multiply the normalization constraints, nu_i the divergence
/// constraints. A side with epsilon = 0 is frozen at its nominal and carries
/// eta = NaN, nu = +inf.
struct Multipliers {
  double eta0;
  double nu0;
  double eta1;
  double nu1;
};

enum class CalibrationStrategy {
  Auto,    // Newton on the multipliers, nested scalar solves if that fails
  Newton,
  Nested,
};

struct CalibrationOptions {
  double calib_tol = 1e-6;
  CalibrationStrategy strategy = CalibrationStrategy::Auto;
  double p_floor = 1e-12;
  int max_newton_iters = 200;
  int max_nested_rounds = 200;
  double fd_step = 1e-5;

  void validate() const;
};

struct CalibrationResult {
  Multipliers multipliers;
  double a0, b0, a1, b1;
  double lambda;
  UncertaintyBall ball0, ball1;
  GriddedDensity q0, q1;
  /// mass(q0) - 1, mass(q1) - 1, D(q0||p0) - eps0, D(q1||p1) - eps1.
  std::array<double, 4> residuals;
  BandModel band0, band1;
  std::vector<Region> regions0, regions1;
  /// Per-point multiplier of the stationarity equations: 1 where q1 sits on
  /// its upper clip, 0 on its lower clip, strictly between on the middle
  /// region. The test decides for H1 with probability 1 - delta_kkt.
  std::vector<double> delta_kkt;
  bool frozen0 = false;
  bool frozen1 = false;
  int iterations = 0;
  std::string strategy_used;

  const Grid& grid() const noexcept { return q0.grid(); }
  double max_residual() const;
};

/// (g(eta / nu), g((weight + eta) / nu)).
std::pair<double, double> coefficients_from_multipliers(double eta, double nu, double weight,
                                                        const DivergenceFamily& fam);

/// Damped fixed point of q0 = min(b0 p0, max(q1 / lambda, a0 p0)),
/// q1 = min(b1 p1, max(lambda q0, a1 p1)) with lambda fixed and no
/// normalization, started from q1 = p1 (or from `start`).
std::pair<GriddedMeasure, GriddedMeasure> clip_fixed_point(double a0, double b0, double a1, double b1,
                                                           double lambda, const GriddedDensity& p0,
                                                           const GriddedDensity& p1, const SolverOptions& opts = {},
                                                           const std::optional<GriddedMeasure>& start = std::nullopt);

/// Pointwise solution of the stationarity conditions for given multipliers.
/// Outputs are unnormalized measures.
struct StationaryPoint {
  std::vector<double> q0;
  std::vector<double> q1;
  std::vector<double> delta;
  std::vector<Region> regions0;
  std::vector<Region> regions1;
};

StationaryPoint stationary_lfds(const Multipliers& m, double lambda, const UncertaintyBall& ball0,
                                const UncertaintyBall& ball1, bool frozen0 = false, bool frozen1 = false);

CalibrationResult calibrate(const UncertaintyBall& ball0, const UncertaintyBall& ball1, double lambda,
                            const CalibrationOptions& opts = {});

struct BandCoefficients {
  double a;
  double b;
  bool lower_empty = false;
  bool upper_empty = false;
  /// With labels: whether min/max of q/p agree with the region averages.
  bool consistent = true;
};

/// Ratio q/p over points with p > p_floor: min and max, or region averages
/// when labels are supplied. Missing clip regions are flagged and warned
/// about, and the min/max fallback is returned for that side.
BandCoefficients extract_band_coefficients(const GriddedDensity& q, const GriddedDensity& p,
                                           const std::vector<Region>* regions = nullptr, double p_floor = 1e-12);

struct ContaminationSide {
  double ratio;                          // 1 - a
  std::optional<double> envelope_factor; // (b - a) / (1 - a), absent if a = 1
  std::vector<double> envelope;          // envelope_factor * p
};

struct ContaminationReport {
  ContaminationSide h0;
  ContaminationSide h1;
};

ContaminationSide contamination_from_coefficients(double a, double b, const GriddedDensity& p);
ContaminationReport contamination_report(const CalibrationResult& result);

/// Pointwise residuals of the two stationarity equations with delta
/// reconstructed from the q1 clip labels, as max absolute values over points
/// with p > p_floor.
std::pair<double, double> kkt_stationarity_residuals(const CalibrationResult& result, double p_floor = 1e-12);

}  // namespace fdband
