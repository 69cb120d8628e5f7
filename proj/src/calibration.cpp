#include "fdband/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "fdband/error.hpp"

namespace fdband {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Signals a monotonicity violation or a failed bracket inside the nested
// strategy; caught by calibrate, never escapes.
struct StrategyFailure {};

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::isfinite(x) ? std::abs(x) : kInf);
  return m;
}

}  // namespace

void CalibrationOptions::validate() const {
  if (!(calib_tol > 0.0) || !(p_floor >= 0.0) || max_newton_iters <= 0 || max_nested_rounds <= 0 ||
      !(fd_step > 0.0)) {
    raise(ErrorCode::Config, "calibration options must be positive");
  }
}

double CalibrationResult::max_residual() const { return max_abs(residuals); }

std::pair<double, double> coefficients_from_multipliers(double eta, double nu, double weight,
                                                        const DivergenceFamily& fam) {
  if (!fam.smooth) raise(ErrorCode::NonSmoothFamily, "family '" + fam.name + "' has no single-valued g");
  if (!(nu > 0.0)) raise(ErrorCode::Config, "nu must be positive");
  if (!(weight >= 0.0)) raise(ErrorCode::Config, "weight must be nonnegative");
  return {g_eval(fam, eta / nu), g_eval(fam, (weight + eta) / nu)};
}

std::pair<GriddedMeasure, GriddedMeasure> clip_fixed_point(double a0, double b0, double a1, double b1,
                                                           double lambda, const GriddedDensity& p0,
                                                           const GriddedDensity& p1, const SolverOptions& opts,
                                                           const std::optional<GriddedMeasure>& start) {
  opts.validate();
  require_same_grid(p0.grid(), p1.grid(), "clip_fixed_point");
  if (!(lambda > 0.0)) raise(ErrorCode::Config, "lambda must be positive");
  if (!(a0 >= 0.0 && a0 <= b0 && a1 >= 0.0 && a1 <= b1)) {
    raise(ErrorCode::InfeasibleBand, "band scalars must satisfy 0 <= a <= b");
  }
  const std::size_t n = p0.size();
  std::vector<double> q1 = start ? start->values() : p1.values();
  if (q1.size() != n) raise(ErrorCode::GridMismatch, "clip_fixed_point start has the wrong length");
  std::vector<double> q0(n, 0.0);

  double change = kInf;
  for (int it = 0; it < opts.max_iters && !(change < opts.fp_tol); ++it) {
    change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q0n = std::min(b0 * p0[i], std::max(q1[i] / lambda, a0 * p0[i]));
      const double q1n = std::min(b1 * p1[i], std::max(lambda * q0n, a1 * p1[i]));
      const double q1d = opts.damping * q1n + (1.0 - opts.damping) * q1[i];
      change = std::max({change, std::abs(q0n - q0[i]), std::abs(q1d - q1[i])});
      q0[i] = q0n;
      q1[i] = q1d;
    }
  }
  if (!(change < opts.fp_tol)) raise(ErrorCode::NoConvergence, "clip fixed point did not converge");

  GriddedMeasure m0(p0.grid(), std::move(q0));
  GriddedMeasure m1(p0.grid(), std::move(q1));
  const double s0 = m0.total_mass();
  const double s1 = m1.total_mass();
  if (s0 > 0.0 && s1 > 0.0) {
    double tv = 0.0;
    for (std::size_t i = 0; i < n; ++i) tv += p0.grid().weight(i) * std::abs(m0[i] / s0 - m1[i] / s1);
    if (0.5 * tv < 1e-6) {
      raise(ErrorCode::DegenerateOverlap, "clip fixed point has coinciding normalized densities");
    }
  }
  return {std::move(m0), std::move(m1)};
}

StationaryPoint stationary_lfds(const Multipliers& m, double lambda, const UncertaintyBall& ball0,
                                const UncertaintyBall& ball1, bool frozen0, bool frozen1) {
  const GriddedDensity& p0 = ball0.nominal;
  const GriddedDensity& p1 = ball1.nominal;
  require_same_grid(p0.grid(), p1.grid(), "stationary_lfds");
  const std::size_t n = p0.size();
  StationaryPoint sp{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                     std::vector<Region>(n, Region::Middle), std::vector<Region>(n, Region::Middle)};

  for (std::size_t i = 0; i < n; ++i) {
    const double pi0 = p0[i];
    const double pi1 = p1[i];
    auto q0f = [&](double d) {
      if (frozen0 || pi0 == 0.0) return pi0;
      return g_eval(ball0.family, (lambda * (1.0 - d) + m.eta0) / m.nu0) * pi0;
    };
    auto q1f = [&](double d) {
      if (frozen1 || pi1 == 0.0) return pi1;
      return g_eval(ball1.family, (d + m.eta1) / m.nu1) * pi1;
    };
    auto phi = [&](double d) { return q1f(d) - lambda * q0f(d); };

    const double phi1 = phi(1.0);
    if (phi1 <= 0.0) {
      sp.delta[i] = 1.0;
      sp.q0[i] = q0f(1.0);
      sp.q1[i] = q1f(1.0);
      if (!frozen0) sp.regions0[i] = Region::LowerClip;
      if (!frozen1) sp.regions1[i] = Region::UpperClip;
      continue;
    }
    const double phi0 = phi(0.0);
    if (phi0 >= 0.0) {
      sp.delta[i] = 0.0;
      sp.q0[i] = q0f(0.0);
      sp.q1[i] = q1f(0.0);
      if (!frozen0) sp.regions0[i] = Region::UpperClip;
      if (!frozen1) sp.regions1[i] = Region::LowerClip;
      continue;
    }
    if (std::isnan(phi0) || std::isnan(phi1)) {
      sp.delta[i] = sp.q0[i] = sp.q1[i] = kNaN;
      continue;
    }
    double d;
    if (std::isfinite(phi0) && std::isfinite(phi1)) {
      std::uintmax_t iters = 100;
      auto br = boost::math::tools::toms748_solve(phi, 0.0, 1.0, phi0, phi1,
                                                  boost::math::tools::eps_tolerance<double>(50), iters);
      d = 0.5 * (br.first + br.second);
    } else {
      auto br = boost::math::tools::bisect(phi, 0.0, 1.0, boost::math::tools::eps_tolerance<double>(50));
      d = 0.5 * (br.first + br.second);
    }
    sp.delta[i] = d;
    // On the constant-ratio region q1 = lambda q0 holds exactly.
    if (frozen1) {
      sp.q1[i] = pi1;
      sp.q0[i] = pi1 / lambda;
    } else {
      sp.q0[i] = q0f(d);
      sp.q1[i] = lambda * sp.q0[i];
    }
  }
  return sp;
}

namespace {

class Calibrator {
public:
  Calibrator(const UncertaintyBall& b0, const UncertaintyBall& b1, double lambda, const CalibrationOptions& opts,
             bool frozen0, bool frozen1)
      : b0_(b0), b1_(b1), lambda_(lambda), opts_(opts), frozen0_(frozen0), frozen1_(frozen1) {
    if (!frozen0_) active_.insert(active_.end(), {0, 1});
    if (!frozen1_) active_.insert(active_.end(), {2, 3});
  }

  // theta = (eta0, ln nu0, eta1, ln nu1)
  std::array<double, 4> initial() const {
    return {b0_.family.f_prime(1.0) - lambda_ / 2.0, 0.0, b1_.family.f_prime(1.0) - 0.5, 0.0};
  }

  Multipliers multipliers(const std::array<double, 4>& th) const {
    return {frozen0_ ? kNaN : th[0], frozen0_ ? kInf : std::exp(th[1]), frozen1_ ? kNaN : th[2],
            frozen1_ ? kInf : std::exp(th[3])};
  }

  StationaryPoint point(const std::array<double, 4>& th) const {
    return stationary_lfds(multipliers(th), lambda_, b0_, b1_, frozen0_, frozen1_);
  }

  // Residuals ordered (mass0, div0, mass1, div1) to line up with theta.
  std::array<double, 4> residuals(const std::array<double, 4>& th) const {
    ++evals_;
    for (double t : th) {
      if (!std::isfinite(t) || std::abs(t) > 700.0) return {kNaN, kNaN, kNaN, kNaN};
    }
    const StationaryPoint sp = point(th);
    const Grid& grid = b0_.nominal.grid();
    std::array<double, 4> r{0.0, 0.0, 0.0, 0.0};
    if (!frozen0_) {
      r[0] = integrate(grid, sp.q0) - 1.0;
      r[1] = divergence_integral(grid, sp.q0, b0_.nominal.values(), b0_.family) - b0_.epsilon;
    }
    if (!frozen1_) {
      r[2] = integrate(grid, sp.q1) - 1.0;
      r[3] = divergence_integral(grid, sp.q1, b1_.nominal.values(), b1_.family) - b1_.epsilon;
    }
    return r;
  }

  double norm(const std::array<double, 4>& r) const {
    double s = 0.0;
    for (int k : active_) s += r[k] * r[k];
    return std::isfinite(s) ? std::sqrt(s) : kInf;
  }

  double worst(const std::array<double, 4>& r) const {
    double m = 0.0;
    for (int k : active_) m = std::max(m, std::isfinite(r[k]) ? std::abs(r[k]) : kInf);
    return m;
  }

  // Damped Newton with a central-difference Jacobian and backtracking.
  bool newton(std::array<double, 4>& th, int& iterations) const {
    const int k = static_cast<int>(active_.size());
    const double target = std::min(1e-12, 1e-4 * opts_.calib_tol);
    std::array<double, 4> r = residuals(th);
    for (int it = 0; it < opts_.max_newton_iters; ++it) {
      iterations = it;
      if (worst(r) <= target) return true;
      Eigen::MatrixXd jac(k, k);
      Eigen::VectorXd rhs(k);
      for (int col = 0; col < k; ++col) {
        const int j = active_[col];
        const double h = opts_.fd_step * std::max(1.0, std::abs(th[j]));
        auto tp = th, tm = th;
        tp[j] += h;
        tm[j] -= h;
        const auto rp = residuals(tp);
        const auto rm = residuals(tm);
        for (int row = 0; row < k; ++row) jac(row, col) = (rp[active_[row]] - rm[active_[row]]) / (2.0 * h);
      }
      for (int row = 0; row < k; ++row) rhs(row) = -r[active_[row]];
      if (!jac.allFinite()) return worst(r) <= opts_.calib_tol;
      const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(rhs);
      if (!step.allFinite()) return worst(r) <= opts_.calib_tol;

      const double r_norm = norm(r);
      bool accepted = false;
      for (double t = 1.0; t > 1e-8; t *= 0.5) {
        auto cand = th;
        for (int col = 0; col < k; ++col) cand[active_[col]] += t * step(col);
        const auto rc = residuals(cand);
        if (norm(rc) < (1.0 - 1e-4 * t) * r_norm) {
          th = cand;
          r = rc;
          accepted = true;
          break;
        }
      }
      if (!accepted) return worst(r) <= opts_.calib_tol;
    }
    iterations = opts_.max_newton_iters;
    return worst(r) <= opts_.calib_tol;
  }

  // Root of a monotone scalar function: bracket by geometric expansion from
  // x0, then TOMS 748. Throws StrategyFailure on a monotonicity violation.
  template <class F>
  static double monotone_root(F fn, double x0, bool increasing, double tol) {
    const double f0 = fn(x0);
    if (!std::isfinite(f0)) throw StrategyFailure{};
    if (std::abs(f0) <= tol) return x0;
    const double dir = ((f0 < 0.0) == increasing) ? 1.0 : -1.0;
    double step = 0.5;
    double lo = x0, flo = f0, hi = x0, fhi = f0;
    for (int k = 0;; ++k) {
      if (k == 60) throw StrategyFailure{};
      hi = x0 + dir * step;
      fhi = fn(hi);
      if (!std::isfinite(fhi)) {
        step *= 0.5;
        continue;
      }
      if ((fhi < 0.0) != (flo < 0.0) || fhi == 0.0) break;
      if (std::abs(fhi) > std::abs(flo) * (1.0 + 1e-12)) throw StrategyFailure{};
      lo = hi;
      flo = fhi;
      step *= 2.0;
    }
    if (std::abs(fhi) <= tol) return hi;
    double a = std::min(lo, hi), b = std::max(lo, hi);
    double fa = (a == lo) ? flo : fhi, fb = (b == hi) ? fhi : flo;
    std::uintmax_t iters = 200;
    auto stop = [&](double u, double v) {
      return std::abs(v - u) <= 1e-14 * std::max(1.0, std::abs(u));
    };
    auto br = boost::math::tools::toms748_solve(fn, a, b, fa, fb, stop, iters);
    const double fu = fn(br.first), fv = fn(br.second);
    return std::abs(fu) <= std::abs(fv) ? br.first : br.second;
  }

  // Mass residuals by alternating scalar solves in eta with nu held fixed.
  void solve_masses(std::array<double, 4>& th, double tol) const {
    for (int round = 0; round < opts_.max_nested_rounds; ++round) {
      if (!frozen0_) {
        th[0] = monotone_root([&](double e) { auto t = th; t[0] = e; return residuals(t)[0]; }, th[0], true, tol);
      }
      if (!frozen1_) {
        th[2] = monotone_root([&](double e) { auto t = th; t[2] = e; return residuals(t)[2]; }, th[2], true, tol);
      }
      const auto r = residuals(th);
      if (std::max(std::abs(r[0]), std::abs(r[2])) <= tol) return;
    }
    throw StrategyFailure{};
  }

  // Outer alternating solves in ln nu for the divergence residuals, each
  // evaluation re-solving the masses.
  bool nested(std::array<double, 4>& th, int& iterations) const {
    const double inner_tol = 1e-3 * opts_.calib_tol;
    try {
      solve_masses(th, inner_tol);
      for (int round = 0; round < opts_.max_nested_rounds; ++round) {
        iterations = round;
        auto r = residuals(th);
        if (worst(r) <= 0.1 * opts_.calib_tol) return true;
        for (int side = 0; side < 2; ++side) {
          if (side == 0 ? frozen0_ : frozen1_) continue;
          const int j = side == 0 ? 1 : 3;
          auto div = [&](double lnu) {
            auto t = th;
            t[j] = lnu;
            solve_masses(t, inner_tol);
            return residuals(t)[j];
          };
          th[j] = monotone_root(div, th[j], false, 0.1 * opts_.calib_tol);
          solve_masses(th, inner_tol);
        }
      }
    } catch (const StrategyFailure&) {
      return false;
    } catch (const Error&) {
      return false;
    }
    return worst(residuals(th)) <= opts_.calib_tol;
  }

  int evals() const { return evals_; }

private:
  const UncertaintyBall& b0_;
  const UncertaintyBall& b1_;
  double lambda_;
  const CalibrationOptions& opts_;
  bool frozen0_, frozen1_;
  std::vector<int> active_;
  mutable int evals_ = 0;
};

double normalized_tv(const Grid& grid, std::span<const double> a, std::span<const double> b) {
  const double sa = integrate(grid, a), sb = integrate(grid, b);
  if (!(sa > 0.0) || !(sb > 0.0)) return kInf;
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += grid.weight(i) * std::abs(a[i] / sa - b[i] / sb);
  return 0.5 * tv;
}

}  // namespace

CalibrationResult calibrate(const UncertaintyBall& ball0, const UncertaintyBall& ball1, double lambda,
                            const CalibrationOptions& opts) {
  opts.validate();
  require_same_grid(ball0.nominal.grid(), ball1.nominal.grid(), "calibrate");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) raise(ErrorCode::Config, "lambda must be positive and finite");
  for (const auto* b : {&ball0, &ball1}) {
    if (!b->family.smooth) {
      raise(ErrorCode::NonSmoothFamily,
            "family '" + b->family.name + "' is not differentiable; calibration needs a smooth f");
    }
    if (!(b->epsilon >= 0.0) || !std::isfinite(b->epsilon)) raise(ErrorCode::Config, "epsilon must be >= 0");
  }
  const bool frozen0 = ball0.epsilon == 0.0;
  const bool frozen1 = ball1.epsilon == 0.0;
  const Grid& grid = ball0.nominal.grid();

  Calibrator cal(ball0, ball1, lambda, opts, frozen0, frozen1);
  std::array<double, 4> th = cal.initial();
  int iterations = 0;
  std::string used = "short-circuit";
  if (!(frozen0 && frozen1)) {
    const bool newton_first = opts.strategy != CalibrationStrategy::Nested;
    const bool allow_other = opts.strategy == CalibrationStrategy::Auto;
    auto run = [&](bool use_newton) {
      used = use_newton ? "newton" : "nested";
      return use_newton ? cal.newton(th, iterations) : cal.nested(th, iterations);
    };
    bool ok = run(newton_first);
    if (!ok && allow_other) {
      th = cal.initial();
      ok = run(!newton_first);
    }
    if (!ok) {
      const StationaryPoint sp = cal.point(th);
      if (normalized_tv(grid, sp.q0, sp.q1) < 1e-6) {
        raise(ErrorCode::DegenerateOverlap, "uncertainty balls intersect: least favorable densities coincide");
      }
      std::ostringstream os;
      os << "calibration did not converge (strategy " << used << ", max residual " << cal.worst(cal.residuals(th))
         << ")";
      raise(ErrorCode::NoConvergence, os.str());
    }
  }

  const Multipliers mult = cal.multipliers(th);
  StationaryPoint sp = cal.point(th);
  if (normalized_tv(grid, sp.q0, sp.q1) < 1e-6) {
    raise(ErrorCode::DegenerateOverlap, "uncertainty balls intersect: least favorable densities coincide");
  }
  const auto r = cal.residuals(th);
  double a0 = 1.0, b0 = 1.0, a1 = 1.0, b1 = 1.0;
  if (!frozen0) std::tie(a0, b0) = coefficients_from_multipliers(mult.eta0, mult.nu0, lambda, ball0.family);
  if (!frozen1) std::tie(a1, b1) = coefficients_from_multipliers(mult.eta1, mult.nu1, 1.0, ball1.family);

  const double norm_tol = std::max(GriddedDensity::kDefaultNormTol, 2.0 * opts.calib_tol);
  CalibrationResult res{mult,
                        a0,
                        b0,
                        a1,
                        b1,
                        lambda,
                        ball0,
                        ball1,
                        GriddedDensity(grid, std::move(sp.q0), norm_tol),
                        GriddedDensity(grid, std::move(sp.q1), norm_tol),
                        {r[0], r[2], r[1], r[3]},
                        scaled_band(ball0.nominal, a0, b0),
                        scaled_band(ball1.nominal, a1, b1),
                        std::move(sp.regions0),
                        std::move(sp.regions1),
                        std::move(sp.delta),
                        frozen0,
                        frozen1,
                        iterations,
                        used};
  return res;
}

BandCoefficients extract_band_coefficients(const GriddedDensity& q, const GriddedDensity& p,
                                           const std::vector<Region>* regions, double p_floor) {
  require_same_grid(q.grid(), p.grid(), "extract_band_coefficients");
  if (regions && regions->size() != q.size()) raise(ErrorCode::GridMismatch, "region labels have the wrong length");
  double mn = kInf, mx = -kInf;
  double sum_lo = 0.0, sum_hi = 0.0;
  std::size_t n_lo = 0, n_hi = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!(p[i] > p_floor)) continue;
    const double ratio = q[i] / p[i];
    mn = std::min(mn, ratio);
    mx = std::max(mx, ratio);
    if (regions) {
      if ((*regions)[i] == Region::LowerClip) {
        sum_lo += ratio;
        ++n_lo;
      } else if ((*regions)[i] == Region::UpperClip) {
        sum_hi += ratio;
        ++n_hi;
      }
    }
  }
  if (!std::isfinite(mn)) raise(ErrorCode::InvalidDensity, "nominal density is below p_floor everywhere");
  BandCoefficients out{mn, mx};
  if (!regions) return out;
  out.lower_empty = n_lo == 0;
  out.upper_empty = n_hi == 0;
  if (out.lower_empty || out.upper_empty) {
    warn(std::string(to_string(ErrorCode::EmptyClipRegion)) + ": " +
         (out.lower_empty ? "lower" : "upper") + " clip region is empty; using min/max of q/p");
  }
  if (!out.lower_empty) {
    out.a = sum_lo / static_cast<double>(n_lo);
    out.consistent = out.consistent && std::abs(mn - out.a) <= 1e-6 * out.a;
  }
  if (!out.upper_empty) {
    out.b = sum_hi / static_cast<double>(n_hi);
    out.consistent = out.consistent && std::abs(mx - out.b) <= 1e-6 * out.b;
  }
  return out;
}

ContaminationSide contamination_from_coefficients(double a, double b, const GriddedDensity& p) {
  ContaminationSide side{1.0 - a, std::nullopt, {}};
  if (std::abs(1.0 - a) > 1e-12) {
    side.envelope_factor = (b - a) / (1.0 - a);
    side.envelope = p.values();
    for (double& v : side.envelope) v *= *side.envelope_factor;
  }
  return side;
}

ContaminationReport contamination_report(const CalibrationResult& result) {
  return {contamination_from_coefficients(result.a0, result.b0, result.ball0.nominal),
          contamination_from_coefficients(result.a1, result.b1, result.ball1.nominal)};
}

std::pair<double, double> kkt_stationarity_residuals(const CalibrationResult& res, double p_floor) {
  const auto& m = res.multipliers;
  const auto& f0 = res.ball0.family.f_prime;
  const auto& f1 = res.ball1.family.f_prime;
  double r0 = 0.0, r1 = 0.0;
  const std::size_t n = res.q0.size();
  const double lam = res.lambda;
  auto near = [](double v, double ref) { return std::abs(v - ref) <= 1e-9 * std::abs(ref); };
  for (std::size_t i = 0; i < n; ++i) {
    const double p0 = res.ball0.nominal[i], p1 = res.ball1.nominal[i];
    const double q0 = res.q0[i], q1 = res.q1[i];
    double delta;
    if (!res.frozen1 && p1 > p_floor) {
      if (near(q1, res.b1 * p1)) {
        delta = 1.0;
      } else if (near(q1, res.a1 * p1)) {
        delta = 0.0;
      } else {
        delta = m.nu1 * f1(q1 / p1) - m.eta1;
      }
    } else if (!res.frozen0 && p0 > p_floor) {
      if (near(q0, res.b0 * p0)) {
        delta = 0.0;
      } else if (near(q0, res.a0 * p0)) {
        delta = 1.0;
      } else {
        delta = 1.0 - (m.nu0 * f0(q0 / p0) - m.eta0) / lam;
      }
    } else {
      continue;
    }
    if (!res.frozen0 && p0 > p_floor) {
      r0 = std::max(r0, std::abs(lam * (1.0 - delta) - (m.nu0 * f0(q0 / p0) - m.eta0)));
    }
    if (!res.frozen1 && p1 > p_floor) {
      r1 = std::max(r1, std::abs(delta - (m.nu1 * f1(q1 / p1) - m.eta1)));
    }
  }
  return {r0, r1};
}

}  // namespace fdband
