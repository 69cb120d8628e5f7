#include "fdband/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "fdband/error.hpp"

namespace fdband {

Grid::Grid(double x_min, double x_max, std::size_t n)
    : Grid(x_min, x_max, n, Quadrature::Trapezoid) {}

Grid::Grid(double x_min, double x_max, std::size_t n, Quadrature rule)
    : x_min_(x_min), x_max_(x_max), n_(n), spacing_(0.0), rule_(rule) {
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_min < x_max)) {
    raise(ErrorCode::InvalidGrid, "grid requires finite x_min < x_max");
  }
  const std::size_t min_points = rule == Quadrature::Trapezoid ? kMinPoints : 2;
  if (n < min_points) {
    raise(ErrorCode::InvalidGrid,
          "grid needs at least " + std::to_string(min_points) + " points, got " + std::to_string(n));
  }
  spacing_ = (x_max - x_min) / static_cast<double>(n - 1);
}

Grid Grid::discrete(std::size_t k) {
  if (k < 2) raise(ErrorCode::InvalidGrid, "discrete grid needs k >= 2");
  return Grid(0.0, static_cast<double>(k - 1), k, Quadrature::Counting);
}

double Grid::weight(std::size_t i) const noexcept {
  if (rule_ == Quadrature::Counting) return 1.0;
  return (i == 0 || i + 1 == n_) ? 0.5 * spacing_ : spacing_;
}

std::vector<double> Grid::points() const {
  std::vector<double> xs(n_);
  for (std::size_t i = 0; i < n_; ++i) xs[i] = x(i);
  return xs;
}

bool Grid::operator==(const Grid& other) const noexcept {
  return n_ == other.n_ && x_min_ == other.x_min_ && x_max_ == other.x_max_ && rule_ == other.rule_;
}

void require_same_grid(const Grid& a, const Grid& b, const char* context) {
  if (!(a == b)) raise(ErrorCode::GridMismatch, std::string(context) + ": operands live on different grids");
}

double integrate(const Grid& grid, std::span<const double> values) {
  if (values.size() != grid.size()) raise(ErrorCode::GridMismatch, "value count does not match grid");
  if (grid.rule() == Quadrature::Counting) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  double interior = 0.0;
  for (std::size_t i = 1; i + 1 < values.size(); ++i) interior += values[i];
  return grid.spacing() * (interior + 0.5 * (values.front() + values.back()));
}

GriddedMeasure::GriddedMeasure(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    raise(ErrorCode::GridMismatch, "measure has " + std::to_string(values_.size()) +
                                       " values for a grid of " + std::to_string(grid_.size()));
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      raise(ErrorCode::InvalidDensity, "measure values must be finite and nonnegative");
    }
  }
}

GriddedDensity::GriddedDensity(GriddedMeasure m, double norm_tol) : m_(std::move(m)) {
  const double mass = m_.total_mass();
  if (!(std::abs(mass - 1.0) <= norm_tol)) {
    std::ostringstream os;
    os << "density has total mass " << mass << " (tolerance " << norm_tol << ")";
    raise(ErrorCode::InvalidDensity, os.str());
  }
}

GriddedDensity::GriddedDensity(Grid grid, std::vector<double> values, double norm_tol)
    : GriddedDensity(GriddedMeasure(grid, std::move(values)), norm_tol) {}

double quadrature(const GriddedMeasure& m) { return m.total_mass(); }

GriddedDensity gaussian_density(const Grid& grid, double mean, double variance) {
  if (!(variance > 0.0)) raise(ErrorCode::NonPositiveVariance, "variance must be positive");
  const double sd = std::sqrt(variance);
  if (mean - 8.0 * sd < grid.x_min() || mean + 8.0 * sd > grid.x_max()) {
    std::ostringstream os;
    os << "truncation mass loss: grid [" << grid.x_min() << ", " << grid.x_max()
       << "] covers less than 8 standard deviations around mean " << mean;
    warn(os.str());
  }
  std::vector<double> v(grid.size());
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi * variance);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = grid.x(i) - mean;
    v[i] = c * std::exp(-0.5 * z * z / variance);
  }
  return normalize(GriddedMeasure(grid, std::move(v)));
}

GriddedDensity normalize(const GriddedMeasure& m) {
  const double mass = m.total_mass();
  if (!(mass > 0.0)) raise(ErrorCode::ZeroMass, "cannot normalize a measure with zero mass");
  std::vector<double> v = m.values();
  for (double& x : v) x /= mass;
  return GriddedDensity(m.grid(), std::move(v));
}

InverseCdf::InverseCdf(const GriddedDensity& d) : grid_(d.grid()), cdf_(d.size(), 0.0) {
  const auto& v = d.values();
  if (grid_.rule() == Quadrature::Counting) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) cdf_[i] = (s += v[i]);
    return;
  }
  for (std::size_t i = 1; i < v.size(); ++i) {
    cdf_[i] = cdf_[i - 1] + 0.5 * grid_.spacing() * (v[i - 1] + v[i]);
  }
}

double InverseCdf::operator()(double u) const {
  if (u <= 0.0) return grid_.x_min();
  if (u >= 1.0) return grid_.x_max();
  const double target = u * cdf_.back();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), target);
  const auto j = static_cast<std::size_t>(it - cdf_.begin());
  if (grid_.rule() == Quadrature::Counting) return grid_.x(std::min(j, cdf_.size() - 1));
  if (j == 0) return grid_.x_min();
  const double lo = cdf_[j - 1];
  const double hi = cdf_[j];
  const double t = hi > lo ? (target - lo) / (hi - lo) : 0.0;
  return grid_.x(j - 1) + t * grid_.spacing();
}

double inverse_cdf_sample(const GriddedDensity& d, double u) { return InverseCdf(d)(u); }

double interpolate(const Grid& grid, std::span<const double> values, double x) {
  if (x <= grid.x_min()) return values.front();
  if (x >= grid.x_max()) return values.back();
  const double pos = (x - grid.x_min()) / grid.spacing();
  auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= values.size()) return values.back();
  const double t = pos - static_cast<double>(i);
  return values[i] + t * (values[i + 1] - values[i]);
}

namespace {

bool parse_pair(const std::string& line, double& a, double& b) {
  const auto comma = line.find(',');
  if (comma == std::string::npos) return false;
  try {
    std::size_t used = 0;
    a = std::stod(line.substr(0, comma), &used);
    b = std::stod(line.substr(comma + 1), &used);
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

}  // namespace

GriddedMeasure load_measure_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::Config, path.string() + ": empty file");
  if (line.find(',') == std::string::npos) raise(ErrorCode::Config, path.string() + ": missing x,value header");
  std::vector<double> xs, vs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    double x = 0.0, v = 0.0;
    if (!parse_pair(line, x, v)) {
      raise(ErrorCode::Config, path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    xs.push_back(x);
    vs.push_back(v);
  }
  if (xs.size() < Grid::kMinPoints) raise(ErrorCode::Config, path.string() + ": too few rows");
  const Grid grid(xs.front(), xs.back(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0 && !(xs[i] > xs[i - 1])) raise(ErrorCode::Config, path.string() + ": x not strictly increasing");
    if (std::abs(xs[i] - grid.x(i)) > 1e-9 * grid.spacing() * std::max(1.0, static_cast<double>(i))) {
      raise(ErrorCode::Config, path.string() + ": x is not uniform to 1e-9 relative");
    }
    if (!(vs[i] >= 0.0)) raise(ErrorCode::Config, path.string() + ": negative density value");
  }
  return GriddedMeasure(grid, std::move(vs));
}

GriddedDensity load_density_csv(const std::filesystem::path& path) { return normalize(load_measure_csv(path)); }

void save_density_csv(const std::filesystem::path& path, const GriddedMeasure& m) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out.precision(17);
  out << "x,value\n";
  for (std::size_t i = 0; i < m.size(); ++i) out << m.grid().x(i) << ',' << m[i] << '\n';
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

GriddedMeasure resample(const GriddedMeasure& m, const Grid& target) {
  std::vector<double> v(target.size());
  const Grid& src = m.grid();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = target.x(i);
    v[i] = (x < src.x_min() || x > src.x_max()) ? 0.0 : interpolate(src, m.values(), x);
  }
  return GriddedMeasure(target, std::move(v));
}

double sup_norm_difference(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace fdband
