#include "fdband/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fdband/error.hpp"

namespace fdband {

namespace {

constexpr int kBumps = 5;
constexpr std::size_t kBins = 20;

struct Bump {
  double center;
  double width;
  double weight;
};

double spread(const GriddedDensity& loc) {
  const Grid& g = loc.grid();
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) mean += g.weight(i) * loc[i] * g.x(i);
  for (std::size_t i = 0; i < g.size(); ++i) var += g.weight(i) * loc[i] * (g.x(i) - mean) * (g.x(i) - mean);
  return std::max(std::sqrt(std::max(var, 0.0)), g.spacing());
}

// Gaussian bumps (five by default) with centers drawn from `loc`, widths between 0.1 and 1
// standard deviation of `loc`, and weights in [0, 1) (or [-1, 1) if signed).
std::vector<double> random_field(const GriddedDensity& loc, std::uint64_t seed, std::uint64_t stream, bool sign,
                                 int bumps = kBumps) {
  const Grid& g = loc.grid();
  const double sigma = spread(loc);
  const InverseCdf inv(loc);
  std::vector<Bump> list;
  for (int k = 0; k < bumps; ++k) {
    const double uc = counter_uniform(seed, stream, k, 0);
    const double uw = counter_uniform(seed, stream, k, 1);
    const double ua = counter_uniform(seed, stream, k, 2);
    list.push_back({inv(uc), std::max(sigma * (0.1 + 0.9 * uw), g.spacing()), sign ? 2.0 * ua - 1.0 : ua});
  }
  std::vector<double> field(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& b : list) {
      const double z = (g.x(i) - b.center) / b.width;
      field[i] += b.weight * std::exp(-0.5 * z * z);
    }
  }
  return field;
}

// Smooth signed field for exponential tilts: one logistic step plus four
// half-weight bumps, so that low-frequency directions are well represented.
std::vector<double> tilt_field(const GriddedDensity& p, std::uint64_t seed) {
  const Grid& g = p.grid();
  const double sigma = spread(p);
  const InverseCdf inv(p);
  const double c = inv(counter_uniform(seed, 2, 0, 0));
  const double s = std::max(sigma * (0.05 + 0.95 * counter_uniform(seed, 2, 0, 1)), g.spacing());
  const double a = 2.0 * counter_uniform(seed, 2, 0, 2) - 1.0;
  auto field = random_field(p, seed, 1, true, kBumps - 1);
  for (std::size_t i = 0; i < g.size(); ++i) field[i] = 0.5 * field[i] + a * std::tanh((g.x(i) - c) / s);
  return field;
}

std::vector<long long> histogram(const std::vector<double>& v, double lo, double hi) {
  std::vector<long long> h(kBins, 0);
  const double span = hi - lo;
  for (double x : v) {
    std::size_t b = span > 0.0 ? static_cast<std::size_t>((x - lo) / span * kBins) : 0;
    h[std::min(b, kBins - 1)] += 1;
  }
  return h;
}

ProbeReport finish_report(const std::vector<double>& violations, std::size_t argmax, double tol, double ref,
                          const std::string& label) {
  ProbeReport r;
  r.samples = static_cast<long long>(violations.size());
  r.max_violation = violations[argmax];
  std::ostringstream os;
  os << label << " sample " << argmax;
  r.argmax_descriptor = os.str();
  r.tolerance = tol;
  r.reference_value = ref;
  const auto [mn, mx] = std::minmax_element(violations.begin(), violations.end());
  r.hist_min = *mn;
  r.hist_max = *mx;
  r.histogram = histogram(violations, *mn, *mx);
  return r;
}

}  // namespace

double probe_tolerance(std::size_t n) { return 1e-6 + 10.0 / static_cast<double>(n); }

GriddedDensity sample_band_member(const BandModel& band, std::uint64_t seed) {
  const Grid& g = band.grid();
  const auto& lo = band.lower().values();
  const auto& hi = band.upper().values();
  const double m_lo = band.lower().total_mass();
  if (std::abs(m_lo - 1.0) <= 1e-12) return normalize(band.lower());
  if (band.upper().total_mass() < 1.0 - 1e-12) raise(ErrorCode::BracketFailure, "band upper mass is below 1");

  std::vector<double> gap(g.size());
  for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = hi[i] - lo[i];
  const GriddedDensity loc = normalize(GriddedMeasure(g, gap));
  const auto field = random_field(loc, seed, 0, false);
  std::vector<double> r(g.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = gap[i] * (field[i] + 0.05);

  std::vector<double> h(g.size());
  auto fill = [&](double t) {
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::min(hi[i], lo[i] + t * r[i]);
    return integrate(g, h);
  };
  double t_lo = 0.0, t_hi = 1.0;
  for (int k = 0; fill(t_hi) < 1.0; ++k) {
    if (k == 200) raise(ErrorCode::BracketFailure, "band sampler could not reach unit mass");
    t_lo = t_hi;
    t_hi *= 2.0;
  }
  for (int k = 0; k < 200 && t_hi - t_lo > 1e-15 * t_hi; ++k) {
    const double t = 0.5 * (t_lo + t_hi);
    const double m = fill(t);
    if (std::abs(m - 1.0) <= 1e-14) {
      t_lo = t_hi = t;
      break;
    }
    (m < 1.0 ? t_lo : t_hi) = t;
  }
  fill(0.5 * (t_lo + t_hi));
  return GriddedDensity(g, h);
}

GriddedDensity sample_ball_member(const UncertaintyBall& ball, std::uint64_t seed, std::optional<double> fixed_s) {
  const GriddedDensity& p = ball.nominal;
  const Grid& g = p.grid();
  if (!(ball.epsilon > 0.0) && !fixed_s) return p;
  auto z = tilt_field(p, seed);
  double zbar = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) zbar += g.weight(i) * p[i] * z[i];
  for (double& v : z) v -= zbar;
  const double zmax = *std::max_element(z.begin(), z.end());

  std::vector<double> h(g.size());
  auto tilt = [&](double s) {
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = p[i] * std::exp(s * (z[i] - zmax));
    const double mass = integrate(g, h);
    for (double& v : h) v /= mass;
    return divergence_integral(g, h, p.values(), ball.family);
  };
  if (fixed_s) {
    tilt(*fixed_s);
    return GriddedDensity(g, h);
  }
  const double target = (0.1 + 0.9 * counter_uniform(seed, 1, 99, 0)) * ball.epsilon;
  double s_lo = 0.0, s_hi = 1.0;
  for (int k = 0; tilt(s_hi) < target; ++k) {
    if (k == 60) raise(ErrorCode::BracketFailure, "ball sampler could not reach the target divergence");
    s_lo = s_hi;
    s_hi *= 2.0;
  }
  for (int k = 0; k < 200 && s_hi - s_lo > 1e-14 * s_hi; ++k) {
    const double s = 0.5 * (s_lo + s_hi);
    (tilt(s) <= target ? s_lo : s_hi) = s;
  }
  const double d = tilt(s_lo);
  if (d > ball.epsilon + 1e-9) raise(ErrorCode::BracketFailure, "ball sampler left the ball");
  return GriddedDensity(g, h);
}

Sampler band_sampler(const BandModel& band) {
  return [band](std::uint64_t seed) { return sample_band_member(band, seed); };
}

Sampler ball_sampler(const UncertaintyBall& ball) {
  return [ball](std::uint64_t seed) { return sample_ball_member(ball, seed); };
}

Sampler anchored_sampler(Sampler base, const GriddedDensity& anchor) {
  return [base = std::move(base), anchor](std::uint64_t seed) {
    const double tau = counter_uniform(seed, 50, 0, 0);
    const GriddedDensity h = base(counter_hash(seed, 50, 1, 0));
    require_same_grid(h.grid(), anchor.grid(), "anchored_sampler");
    std::vector<double> mix(h.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = (1.0 - tau) * anchor[i] + tau * h[i];
    return GriddedDensity(h.grid(), std::move(mix));
  };
}

ProbeReport saddle_probe(const DecisionRule& rule, const Sampler& feasible0, const Sampler& feasible1, long long count,
                         std::uint64_t seed, std::optional<double> tolerance) {
  rule.validate();
  if (count < 100) raise(ErrorCode::Config, "saddle_probe needs at least 100 samples");
  const auto d = delta_on_grid(rule);
  const double ref = weighted_error(d, rule.lambda, rule.q0, rule.q1);
  std::vector<double> v(static_cast<std::size_t>(count));
  std::size_t arg = 0;
  for (long long i = 0; i < count; ++i) {
    const auto h0 = feasible0(counter_hash(seed, 10, i, 0));
    const auto h1 = feasible1(counter_hash(seed, 10, i, 1));
    v[i] = weighted_error(d, rule.lambda, h0, h1) - ref;
    if (v[i] > v[arg]) arg = i;
  }
  return finish_report(v, arg, tolerance.value_or(probe_tolerance(rule.grid().size())), ref, "pair");
}

namespace {

// Weighted error of the N-sample product test for product densities given
// by weighted factors wa0[k][i] = w_i h0_k(x_i) (and likewise for h1).
double product_value(const std::vector<double>& delta, double lambda, std::size_t n, int N,
                     const std::vector<std::vector<double>>& wa0, const std::vector<std::vector<double>>& wa1) {
  double total = 0.0;
  std::vector<std::size_t> idx(N, 0);
  for (std::size_t flat = 0; flat < delta.size(); ++flat) {
    double a = 1.0, b = 1.0;
    for (int k = 0; k < N; ++k) {
      a *= wa0[k][idx[k]];
      b *= wa1[k][idx[k]];
    }
    total += b * (1.0 - delta[flat]) + lambda * a * delta[flat];
    for (int k = N - 1; k >= 0; --k) {
      if (++idx[k] < n) break;
      idx[k] = 0;
    }
  }
  return total;
}

std::vector<double> weighted(const GriddedDensity& h) {
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = h.grid().weight(i) * h[i];
  return out;
}

}  // namespace

ProbeReport product_saddle_probe(const DecisionRule& rule, const Sampler& feasible0, const Sampler& feasible1, int N,
                                 long long count, std::uint64_t seed, std::optional<double> tolerance) {
  rule.validate();
  if (N != 2 && N != 3) raise(ErrorCode::Config, "product probe supports N = 2 or 3");
  if (count < 1) raise(ErrorCode::Config, "product probe needs at least one sample");
  const std::size_t n = rule.grid().size();
  if ((N == 3 && n > 256) || (N == 2 && n > 2048)) {
    std::ostringstream os;
    os << "grid of " << n << " points is too large for an N = " << N << " product probe";
    raise(ErrorCode::GridTooLarge, os.str());
  }
  std::size_t total = 1;
  for (int k = 0; k < N; ++k) total *= n;

  std::vector<double> delta(total);
  std::vector<std::size_t> idx(N, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double a = 1.0, b = 1.0;
    for (int k = 0; k < N; ++k) {
      a *= rule.q0[idx[k]];
      b *= rule.q1[idx[k]];
    }
    const double ref = rule.lambda * a;
    const double tol = rule.boundary_tol * N;
    delta[flat] = b > ref * (1.0 + tol) ? 1.0 : (b < ref * (1.0 - tol) ? 0.0 : rule.kappa);
    for (int k = N - 1; k >= 0; --k) {
      if (++idx[k] < n) break;
      idx[k] = 0;
    }
  }

  const std::vector<std::vector<double>> lfd0(N, weighted(rule.q0)), lfd1(N, weighted(rule.q1));
  const double ref = product_value(delta, rule.lambda, n, N, lfd0, lfd1);

  std::vector<double> v(static_cast<std::size_t>(count));
  std::size_t arg = 0;
  for (long long i = 0; i < count; ++i) {
    std::vector<std::vector<double>> f0, f1;
    const bool identical = i % 2 == 0;
    for (int k = 0; k < N; ++k) {
      const std::uint64_t key = identical ? 0 : static_cast<std::uint64_t>(k);
      f0.push_back(weighted(feasible0(counter_hash(seed, 20, i, 2 * key))));
      f1.push_back(weighted(feasible1(counter_hash(seed, 20, i, 2 * key + 1))));
    }
    v[i] = product_value(delta, rule.lambda, n, N, f0, f1) - ref;
    if (v[i] > v[arg]) arg = i;
  }
  return finish_report(v, arg, tolerance.value_or(probe_tolerance(n)), ref, "product");
}

ProbeReport product_saddle_probe(const DecisionRule& rule, const BandModel& band0, const BandModel& band1, int N,
                                 long long count, std::uint64_t seed, std::optional<double> tolerance) {
  return product_saddle_probe(rule, band_sampler(band0), band_sampler(band1), N, count, seed, tolerance);
}

namespace {

struct Lattice {
  std::vector<double> points;  // candidates x k, row-major
  std::vector<double> step;
  long long count = 0;
};

Lattice band_lattice(const BandModel& band, int resolution) {
  const Grid& g = band.grid();
  const std::size_t k = g.size();
  Lattice lat;
  lat.step.resize(k);
  for (std::size_t j = 0; j < k; ++j) lat.step[j] = (band.upper()[j] - band.lower()[j]) / resolution;
  std::vector<int> m(k - 1, 0);
  std::vector<double> cand(k);
  while (true) {
    double used = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) {
      cand[j] = band.lower()[j] + m[j] * lat.step[j];
      used += g.weight(j) * cand[j];
    }
    const double last = (1.0 - used) / g.weight(k - 1);
    const double slack = 1e-12 * std::max(1.0, band.upper()[k - 1]);
    if (last >= band.lower()[k - 1] - slack && last <= band.upper()[k - 1] + slack) {
      cand[k - 1] = std::clamp(last, band.lower()[k - 1], band.upper()[k - 1]);
      lat.points.insert(lat.points.end(), cand.begin(), cand.end());
      ++lat.count;
    }
    std::size_t j = 0;
    for (; j + 1 < k; ++j) {
      if (++m[j] <= resolution) break;
      m[j] = 0;
    }
    if (j + 1 == k) break;
  }
  return lat;
}

// Distance in lattice steps over the free coordinates (all but the last,
// which the mass constraint determines).
double lattice_distance(const double* c, const std::vector<double>& target, const std::vector<double>& step) {
  double d = 0.0;
  for (std::size_t j = 0; j + 1 < target.size(); ++j) {
    const double diff = std::abs(c[j] - target[j]);
    if (step[j] > 0.0) {
      d = std::max(d, diff / step[j]);
    } else if (diff > 1e-12) {
      d = std::numeric_limits<double>::infinity();
    }
  }
  return d;
}

}  // namespace

BruteForceResult brute_force_band_lfds(const BandModel& band0, const BandModel& band1, double lambda, int resolution,
                                       const std::optional<std::pair<std::vector<double>, std::vector<double>>>&
                                           target) {
  require_same_grid(band0.grid(), band1.grid(), "brute_force_band_lfds");
  const Grid& g = band0.grid();
  const std::size_t k = g.size();
  if (k > 5) raise(ErrorCode::TooLarge, "brute force supports at most 5 support points");
  if (resolution < 1 || resolution > 400) raise(ErrorCode::TooLarge, "resolution must lie in [1, 400]");
  if (!(lambda > 0.0)) raise(ErrorCode::Config, "lambda must be positive");
  const double per_side = std::pow(resolution + 1.0, static_cast<double>(k - 1));
  if (per_side > 2e7 || per_side * per_side > 1e10) {
    raise(ErrorCode::TooLarge, "lattice too large for exhaustive search");
  }
  if (target && (target->first.size() != k || target->second.size() != k)) {
    raise(ErrorCode::GridMismatch, "target pair has the wrong length");
  }

  const Lattice l0 = band_lattice(band0, resolution);
  const Lattice l1 = band_lattice(band1, resolution);
  if (l0.count == 0 || l1.count == 0) raise(ErrorCode::InfeasibleBand, "lattice contains no band member");

  // Scaled copies so that the inner loop is sum_x min(b, a).
  std::vector<double> a0(l0.points.size()), b1(l1.points.size());
  for (std::size_t c = 0; c < a0.size(); ++c) a0[c] = lambda * g.weight(c % k) * l0.points[c];
  for (std::size_t c = 0; c < b1.size(); ++c) b1[c] = g.weight(c % k) * l1.points[c];
  auto value = [&](long long i, long long j) {
    const double* a = &a0[i * k];
    const double* b = &b1[j * k];
    double s = 0.0;
    for (std::size_t x = 0; x < k; ++x) s += std::min(a[x], b[x]);
    return s;
  };

  double best = -1.0;
  long long bi = 0, bj = 0;
  for (long long i = 0; i < l0.count; ++i) {
    for (long long j = 0; j < l1.count; ++j) {
      const double v = value(i, j);
      if (v > best) {
        best = v;
        bi = i;
        bj = j;
      }
    }
  }

  BruteForceResult out;
  out.q0.assign(l0.points.begin() + bi * k, l0.points.begin() + (bi + 1) * k);
  out.q1.assign(l1.points.begin() + bj * k, l1.points.begin() + (bj + 1) * k);
  out.value = best;
  out.step0 = l0.step;
  out.step1 = l1.step;
  out.candidates0 = l0.count;
  out.candidates1 = l1.count;

  if (target) {
    std::vector<double> d0(l0.count), d1(l1.count);
    for (long long i = 0; i < l0.count; ++i) d0[i] = lattice_distance(&l0.points[i * k], target->first, l0.step);
    for (long long j = 0; j < l1.count; ++j) d1[j] = lattice_distance(&l1.points[j * k], target->second, l1.step);
    out.argmax_distance_steps = std::max(d0[bi], d1[bj]);
    // Half a step in every free coordinate of both hypotheses, compensated
    // in the last coordinate, moves the objective by at most this much; the
    // lattice point nearest to any exact maximizer is therefore in the set.
    double tie = 0.0;
    for (std::size_t x = 0; x + 1 < k; ++x) tie += g.weight(x) * (l0.step[x] + l1.step[x]);
    tie *= std::max(1.0, lambda);
    double closest = std::numeric_limits<double>::infinity();
    for (long long i = 0; i < l0.count; ++i) {
      if (d0[i] >= closest) continue;
      for (long long j = 0; j < l1.count; ++j) {
        const double d = std::max(d0[i], d1[j]);
        if (d < closest && value(i, j) >= best - tie) closest = d;
      }
    }
    out.target_distance_steps = closest;
  }
  return out;
}

ContainmentReport containment_probe(const UncertaintyBall& ball, const BandModel& band, long long count,
                                    std::uint64_t seed) {
  require_same_grid(ball.nominal.grid(), band.grid(), "containment_probe");
  if (count < 1) raise(ErrorCode::Config, "containment_probe needs at least one sample");
  long long ball_in = 0, band_in = 0;
  for (long long i = 0; i < count; ++i) {
    const auto hb = sample_ball_member(ball, counter_hash(seed, 30, i, 0));
    if (band.contains(hb)) ++ball_in;
    const auto hd = sample_band_member(band, counter_hash(seed, 30, i, 1));
    if (eval_divergence(hd, ball.nominal, ball.family) <= ball.epsilon + 1e-9) ++band_in;
  }
  const double n = static_cast<double>(count);
  return {count, ball_in / n, band_in / n};
}

GriddedDensity perturb_lfd(const DecisionRule& rule, double shift) {
  const auto d = delta_on_grid(rule);
  const Grid& g = rule.grid();
  double m1 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 1.0) m1 += g.weight(i) * rule.q0[i];
  }
  const double total = rule.q0.total_mass();
  if (!(m1 > shift) || !(total - m1 > 0.0)) raise(ErrorCode::Config, "cannot shift that much mass");
  std::vector<double> q(rule.q0.values());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] *= d[i] == 1.0 ? 1.0 - shift / m1 : 1.0 + shift / (total - m1);
  }
  return GriddedDensity(g, std::move(q));
}

DiscreteInstance discrete_instance(const std::vector<double>& p0, const std::vector<double>& p1, double spread) {
  if (p0.size() != p1.size()) raise(ErrorCode::GridMismatch, "nominals have different sizes");
  const Grid g = Grid::discrete(p0.size());
  GriddedDensity d0(g, p0), d1(g, p1);
  auto band = [&](const GriddedDensity& p) {
    std::vector<double> lo(p.size()), hi(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      lo[i] = (1.0 - spread) * p[i];
      hi[i] = std::min((1.0 + spread) * p[i], 1.0);
    }
    return BandModel(GriddedMeasure(g, lo), GriddedMeasure(g, hi));
  };
  return {d0, d1, band(d0), band(d1)};
}

DiscreteInstance random_discrete_instance(std::uint64_t seed, std::size_t k) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::vector<double> p0(k), p1(k);
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p0[i] = -std::log(1.0 - counter_uniform(seed, 40, attempt, 2 * i));
      p1[i] = -std::log(1.0 - counter_uniform(seed, 40, attempt, 2 * i + 1));
      s0 += p0[i];
      s1 += p1[i];
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p0[i] /= s0;
      p1[i] /= s1;
      tv += 0.5 * std::abs(p0[i] - p1[i]);
    }
    // Well-separated nominals keep the +-30% bands disjoint.
    if (tv >= 0.35 && *std::min_element(p0.begin(), p0.end()) > 0.02 &&
        *std::min_element(p1.begin(), p1.end()) > 0.02) {
      return discrete_instance(p0, p1);
    }
  }
}

}  // namespace fdband
