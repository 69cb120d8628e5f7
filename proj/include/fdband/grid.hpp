#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace fdband {

/// Quadrature rule attached to a grid. Trapezoid is the continuous-domain
/// default; Counting gives unit weights and is used for small discrete
/// instances (one atom per grid point).
enum class Quadrature { Trapezoid, Counting };

/// Uniform one-dimensional grid with quadrature weights.
class Grid {
public:
  static constexpr std::size_t kMinPoints = 16;

  /// Continuous grid on [x_min, x_max] with trapezoid weights. Requires
  /// n >= 16 and x_min < x_max.
  Grid(double x_min, double x_max, std::size_t n);

  /// Discrete support {0, 1, ..., k-1} with unit weights, k >= 2.
  static Grid discrete(std::size_t k);

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  std::size_t size() const noexcept { return n_; }
  double spacing() const noexcept { return spacing_; }
  Quadrature rule() const noexcept { return rule_; }

  double x(std::size_t i) const noexcept { return x_min_ + spacing_ * static_cast<double>(i); }
  double weight(std::size_t i) const noexcept;
  std::vector<double> points() const;

  bool operator==(const Grid& other) const noexcept;

private:
  Grid(double x_min, double x_max, std::size_t n, Quadrature rule);

  double x_min_;
  double x_max_;
  std::size_t n_;
  double spacing_;
  Quadrature rule_;
};

/// Throws GridMismatch unless both grids are identical.
void require_same_grid(const Grid& a, const Grid& b, const char* context);

/// Quadrature of raw values on a grid.
double integrate(const Grid& grid, std::span<const double> values);

/// Nonnegative measure tabulated as a density with respect to the grid's
/// reference measure.
class GriddedMeasure {
public:
  GriddedMeasure(Grid grid, std::vector<double> values);

  const Grid& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Quadrature of the values, recomputed on every call.
  double total_mass() const { return integrate(grid_, values_); }

private:
  Grid grid_;
  std::vector<double> values_;
};

/// A GriddedMeasure with unit mass (within norm_tol).
class GriddedDensity {
public:
  static constexpr double kDefaultNormTol = 1e-6;

  explicit GriddedDensity(GriddedMeasure m, double norm_tol = kDefaultNormTol);
  GriddedDensity(Grid grid, std::vector<double> values, double norm_tol = kDefaultNormTol);

  const GriddedMeasure& measure() const noexcept { return m_; }
  const Grid& grid() const noexcept { return m_.grid(); }
  const std::vector<double>& values() const noexcept { return m_.values(); }
  double operator[](std::size_t i) const noexcept { return m_[i]; }
  std::size_t size() const noexcept { return m_.size(); }
  double total_mass() const { return m_.total_mass(); }

  operator const GriddedMeasure&() const noexcept { return m_; }

private:
  GriddedMeasure m_;
};

double quadrature(const GriddedMeasure& m);

/// Normal density tabulated on the grid and renormalized to unit quadrature.
/// Warns when the grid covers less than 8 standard deviations on either side.
GriddedDensity gaussian_density(const Grid& grid, double mean, double variance);

GriddedDensity normalize(const GriddedMeasure& m);

/// Inverse of the piecewise-linear CDF built from trapezoid partial sums.
/// Build once and call repeatedly when sampling.
class InverseCdf {
public:
  explicit InverseCdf(const GriddedDensity& d);
  double operator()(double u) const;

private:
  Grid grid_;
  std::vector<double> cdf_;
};

double inverse_cdf_sample(const GriddedDensity& d, double u);

/// Linear interpolation of tabulated values at x (x clamped to the grid).
double interpolate(const Grid& grid, std::span<const double> values, double x);

/// Reads a two-column `x,value` CSV with header. x must be strictly
/// increasing and uniform to 1e-9 relative; the result is renormalized.
GriddedDensity load_density_csv(const std::filesystem::path& path);
/// Same format without renormalization (band bounds).
GriddedMeasure load_measure_csv(const std::filesystem::path& path);
void save_density_csv(const std::filesystem::path& path, const GriddedMeasure& m);

/// Resamples a measure onto another grid by linear interpolation (zero
/// outside the source range).
GriddedMeasure resample(const GriddedMeasure& m, const Grid& target);

double sup_norm_difference(std::span<const double> a, std::span<const double> b);

}  // namespace fdband
