#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fdband/grid.hpp"

namespace fdband {

/// Which branch of min{upper, max{r, lower}} was active at a grid point.
enum class Region : std::uint8_t { LowerClip, Middle, UpperClip };

const char* to_string(Region r);

/// Density band {h : lower <= h <= upper}.
class BandModel {
public:
  static constexpr double kNormTol = 1e-6;

  BandModel(GriddedMeasure lower, GriddedMeasure upper);

  const GriddedMeasure& lower() const noexcept { return lower_; }
  const GriddedMeasure& upper() const noexcept { return upper_; }
  const Grid& grid() const noexcept { return lower_.grid(); }

  bool contains(const GriddedMeasure& h, double slack = 1e-10) const;

private:
  GriddedMeasure lower_;
  GriddedMeasure upper_;
};

struct SolverOptions {
  double fp_tol = 1e-10;
  int max_iters = 10'000;
  double bisect_tol = 1e-12;
  double damping = 1.0;
  /// Optional warm start for q1 in solve_band_lfds. Band LFDs are not unique
  /// on the constant-likelihood-ratio region, so the returned pair depends on
  /// the start there.
  std::optional<std::vector<double>> initial_q1;

  void validate() const;
};

struct LFDSolution {
  GriddedDensity q0;
  GriddedDensity q1;
  double lambda;
  std::pair<double, double> lambda_interval;
  double c0;
  double c1;
  std::vector<Region> regions0;
  std::vector<Region> regions1;
  int iterations;
  double residual;

  const Grid& grid() const noexcept { return q0.grid(); }
};

struct NormalizedClip {
  GriddedDensity density;
  double c;
  std::vector<Region> regions;
};

/// Band [a p, b p]. Requires 0 <= a <= 1 <= b (up to norm_tol).
BandModel scaled_band(const GriddedDensity& p, double a, double b);

/// Pointwise min(upper, max(r, lower)).
GriddedMeasure clip_update(const GriddedMeasure& r, const BandModel& band);

/// Region labels for clipping raw values into a band; ties go to Middle.
std::vector<Region> clip_regions(std::span<const double> raw, const BandModel& band);

/// Finds c with quadrature(min(upper, max(c * direction, lower))) = 1.
NormalizedClip normalized_clip(const GriddedMeasure& direction, const BandModel& band,
                               const SolverOptions& opts = {});

/// Least favorable pair for two density bands by alternating normalized
/// clipping. lambda = c1; the interval spans c1 and 1/c0.
LFDSolution solve_band_lfds(const BandModel& band0, const BandModel& band1, const SolverOptions& opts = {});

/// Total variation distance 0.5 * integral |a - b|.
double total_variation_distance(const GriddedMeasure& a, const GriddedMeasure& b);

/// Quadrature mass of the points labelled Middle in both label arrays.
double doubly_middle_mass(const GriddedMeasure& m, std::span<const Region> r0, std::span<const Region> r1);

}  // namespace fdband
