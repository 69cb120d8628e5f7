#include "fdband/band.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "fdband/error.hpp"

namespace fdband {

const char* to_string(Region r) {
  switch (r) {
    case Region::LowerClip: return "lower";
    case Region::Middle: return "middle";
    case Region::UpperClip: return "upper";
  }
  return "?";
}

BandModel::BandModel(GriddedMeasure lower, GriddedMeasure upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  require_same_grid(lower_.grid(), upper_.grid(), "BandModel");
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (lower_[i] > upper_[i]) {
      std::ostringstream os;
      os << "lower bound exceeds upper bound at x = " << grid().x(i);
      raise(ErrorCode::InfeasibleBand, os.str());
    }
  }
  const double lo = lower_.total_mass();
  const double hi = upper_.total_mass();
  if (lo > 1.0 + kNormTol || hi < 1.0 - kNormTol) {
    std::ostringstream os;
    os << "band masses [" << lo << ", " << hi << "] do not bracket 1";
    raise(ErrorCode::InfeasibleBand, os.str());
  }
}

bool BandModel::contains(const GriddedMeasure& h, double slack) const {
  if (!(h.grid() == grid())) return false;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double scale = std::max(1.0, upper_[i]);
    if (h[i] < lower_[i] - slack * scale || h[i] > upper_[i] + slack * scale) return false;
  }
  return true;
}

void SolverOptions::validate() const {
  if (!(fp_tol > 0.0) || max_iters <= 0 || !(bisect_tol > 0.0) || !(damping > 0.0) || damping > 1.0) {
    raise(ErrorCode::Config, "solver options must be positive with damping in (0, 1]");
  }
}

BandModel scaled_band(const GriddedDensity& p, double a, double b) {
  if (!(a >= 0.0) || !(b >= a)) raise(ErrorCode::InfeasibleBand, "scaled band needs 0 <= a <= b");
  if (a > 1.0 + BandModel::kNormTol || b < 1.0 - BandModel::kNormTol) {
    std::ostringstream os;
    os << "scaled band [" << a << ", " << b << "] admits no probability density";
    raise(ErrorCode::InfeasibleBand, os.str());
  }
  std::vector<double> lo(p.values()), hi(p.values());
  for (double& v : lo) v *= a;
  for (double& v : hi) v *= b;
  return BandModel(GriddedMeasure(p.grid(), std::move(lo)), GriddedMeasure(p.grid(), std::move(hi)));
}

GriddedMeasure clip_update(const GriddedMeasure& r, const BandModel& band) {
  require_same_grid(r.grid(), band.grid(), "clip_update");
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(band.upper()[i], std::max(r[i], band.lower()[i]));
  }
  return GriddedMeasure(r.grid(), std::move(out));
}

std::vector<Region> clip_regions(std::span<const double> raw, const BandModel& band) {
  std::vector<Region> regions(raw.size(), Region::Middle);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double lo = band.lower()[i];
    const double hi = band.upper()[i];
    const double tol = 1e-10 * std::max({hi, std::abs(raw[i]), 1e-300});
    if (raw[i] < lo - tol) {
      regions[i] = Region::LowerClip;
    } else if (raw[i] > hi + tol) {
      regions[i] = Region::UpperClip;
    }
  }
  return regions;
}

namespace {

double clipped_mass(const Grid& grid, std::span<const double> dir, const BandModel& band, double c) {
  double s = 0.0;
  const auto& lo = band.lower().values();
  const auto& hi = band.upper().values();
  for (std::size_t i = 0; i < dir.size(); ++i) {
    s += grid.weight(i) * std::min(hi[i], std::max(c * dir[i], lo[i]));
  }
  return s;
}

}  // namespace

NormalizedClip normalized_clip(const GriddedMeasure& direction, const BandModel& band, const SolverOptions& opts) {
  require_same_grid(direction.grid(), band.grid(), "normalized_clip");
  if (!(direction.total_mass() > 0.0)) raise(ErrorCode::ZeroDirection, "clipping direction has zero mass");
  const Grid& grid = direction.grid();
  const auto& dir = direction.values();
  auto mass = [&](double c) { return clipped_mass(grid, dir, band, c); };

  double lo = 1.0, hi = 1.0;
  double m = mass(1.0);
  if (std::abs(m - 1.0) > opts.bisect_tol) {
    if (m < 1.0) {
      do {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) raise(ErrorCode::BracketFailure, "band upper mass cannot reach 1");
      } while (mass(hi) < 1.0);
    } else {
      do {
        hi = lo;
        lo *= 0.5;
        if (lo < 1e-300) raise(ErrorCode::BracketFailure, "band lower mass exceeds 1");
      } while (mass(lo) > 1.0);
    }
    // Geometric bisection: c spans many orders of magnitude on wide bands.
    double c = std::sqrt(lo * hi);
    for (int k = 0; k < 400; ++k) {
      c = std::sqrt(lo * hi);
      const double mc = mass(c);
      if (std::abs(mc - 1.0) <= opts.bisect_tol) break;
      if (mc < 1.0) {
        lo = c;
      } else {
        hi = c;
      }
      if (hi / lo - 1.0 <= 4.0 * std::numeric_limits<double>::epsilon()) break;
    }
    lo = hi = c;
  }
  const double c = lo;
  std::vector<double> raw(dir.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = c * dir[i];
  auto regions = clip_regions(raw, band);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = std::min(band.upper()[i], std::max(raw[i], band.lower()[i]));
  }
  return NormalizedClip{GriddedDensity(grid, std::move(raw)), c, std::move(regions)};
}

double total_variation_distance(const GriddedMeasure& a, const GriddedMeasure& b) {
  require_same_grid(a.grid(), b.grid(), "total_variation_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.grid().weight(i) * std::abs(a[i] - b[i]);
  return 0.5 * s;
}

double doubly_middle_mass(const GriddedMeasure& m, std::span<const Region> r0, std::span<const Region> r1) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (r0[i] == Region::Middle && r1[i] == Region::Middle) s += m.grid().weight(i) * m[i];
  }
  return s;
}

LFDSolution solve_band_lfds(const BandModel& band0, const BandModel& band1, const SolverOptions& opts) {
  opts.validate();
  require_same_grid(band0.grid(), band1.grid(), "solve_band_lfds");
  const Grid& grid = band0.grid();
  const std::size_t n = grid.size();

  std::vector<double> q1;
  if (opts.initial_q1) {
    if (opts.initial_q1->size() != n) raise(ErrorCode::GridMismatch, "initial_q1 has the wrong length");
    q1 = *opts.initial_q1;
  } else {
    std::vector<double> mid(n);
    for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (band1.lower()[i] + band1.upper()[i]);
    q1 = normalize(clip_update(GriddedMeasure(grid, std::move(mid)), band1)).values();
  }

  std::vector<double> q0(n, 0.0);
  std::optional<NormalizedClip> last0, last1;
  double change = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < opts.max_iters) {
    ++it;
    last0 = normalized_clip(GriddedMeasure(grid, q1), band0, opts);
    last1 = normalized_clip(last0->density, band1, opts);
    const auto& q0_new = last0->density.values();
    const auto& q1_full = last1->density.values();
    change = sup_norm_difference(q0_new, q0);
    double d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = opts.damping * q1_full[i] + (1.0 - opts.damping) * q1[i];
      d1 = std::max(d1, std::abs(next - q1[i]));
      q1[i] = next;
    }
    change = std::max(change, d1);
    q0 = q0_new;
    if (change < opts.fp_tol) break;
  }
  if (!(change < opts.fp_tol)) {
    std::ostringstream os;
    os << "band LFD iteration did not converge in " << opts.max_iters << " iterations (change " << change << ")";
    raise(ErrorCode::NoConvergence, os.str());
  }

  const double c0 = last0->c;
  const double c1 = last1->c;
  LFDSolution sol{last0->density,
                  last1->density,
                  c1,
                  {std::min(c1, 1.0 / c0), std::max(c1, 1.0 / c0)},
                  c0,
                  c1,
                  last0->regions,
                  last1->regions,
                  it,
                  change};
  const double tv = total_variation_distance(sol.q0, sol.q1);
  if (tv < 1e-6) {
    std::ostringstream os;
    os << "least favorable densities coincide (total variation " << tv << "); the bands overlap";
    raise(ErrorCode::DegenerateOverlap, os.str());
  }
  return sol;
}

}  // namespace fdband
