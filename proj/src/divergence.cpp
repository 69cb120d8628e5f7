#include "fdband/divergence.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fdband/error.hpp"

namespace fdband {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

namespace families {

DivergenceFamily kullback_leibler() {
  DivergenceFamily fam;
  fam.name = "kl";
  fam.f = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  fam.f_prime = [](double x) { return std::log(x) + 1.0; };
  fam.g = [](double y) { return std::exp(y - 1.0); };
  fam.f_at_zero = 0.0;
  fam.slope_at_infinity = kInf;
  fam.f_prime_at_zero = -kInf;
  fam.f_prime_at_infinity = kInf;
  return fam;
}

DivergenceFamily reverse_kullback_leibler() {
  DivergenceFamily fam;
  fam.name = "reverse-kl";
  fam.f = [](double x) { return -std::log(x); };
  fam.f_prime = [](double x) { return -1.0 / x; };
  fam.g = [](double y) { return y < 0.0 ? -1.0 / y : kInf; };
  fam.f_at_zero = kInf;
  fam.slope_at_infinity = 0.0;
  fam.f_prime_at_zero = -kInf;
  fam.f_prime_at_infinity = 0.0;
  return fam;
}

DivergenceFamily squared_hellinger() {
  DivergenceFamily fam;
  fam.name = "hellinger2";
  fam.f = [](double x) {
    const double r = std::sqrt(x) - 1.0;
    return r * r;
  };
  fam.f_prime = [](double x) { return 1.0 - 1.0 / std::sqrt(x); };
  fam.g = [](double y) {
    if (y >= 1.0) return kInf;
    const double r = 1.0 - y;
    return 1.0 / (r * r);
  };
  fam.f_at_zero = 1.0;
  fam.slope_at_infinity = 1.0;
  fam.f_prime_at_zero = -kInf;
  fam.f_prime_at_infinity = 1.0;
  return fam;
}

DivergenceFamily chi_squared() {
  DivergenceFamily fam;
  fam.name = "chi2";
  fam.f = [](double x) { return (x - 1.0) * (x - 1.0); };
  fam.f_prime = [](double x) { return 2.0 * (x - 1.0); };
  fam.g = [](double y) { return y <= -2.0 ? 0.0 : 1.0 + 0.5 * y; };
  fam.f_at_zero = 1.0;
  fam.slope_at_infinity = kInf;
  fam.f_prime_at_zero = -2.0;
  fam.f_prime_at_infinity = kInf;
  return fam;
}

DivergenceFamily alpha_divergence(double a) {
  if (!std::isfinite(a) || a == 0.0 || a == 1.0) {
    raise(ErrorCode::UnknownFamily, "alpha-divergence needs alpha outside {0, 1}");
  }
  DivergenceFamily fam;
  std::ostringstream os;
  os << "alpha:" << a;
  fam.name = os.str();
  fam.alpha = a;
  const double scale = 1.0 / (a * (a - 1.0));
  fam.f = [a, scale](double x) { return (std::pow(x, a) - a * x - (1.0 - a)) * scale; };
  fam.f_prime = [a](double x) { return (std::pow(x, a - 1.0) - 1.0) / (a - 1.0); };
  fam.g = [a](double y) {
    const double base = 1.0 + (a - 1.0) * y;
    if (base <= 0.0) return a > 1.0 ? 0.0 : kInf;
    return std::pow(base, 1.0 / (a - 1.0));
  };
  if (a > 0.0) {
    fam.f_at_zero = 1.0 / a;
  } else {
    fam.f_at_zero = kInf;
  }
  fam.slope_at_infinity = a > 1.0 ? kInf : 1.0 / (1.0 - a);
  fam.f_prime_at_zero = a > 1.0 ? -1.0 / (a - 1.0) : -kInf;
  fam.f_prime_at_infinity = a > 1.0 ? kInf : 1.0 / (1.0 - a);
  fam.smooth = a > 0.0;
  return fam;
}

DivergenceFamily total_variation() {
  DivergenceFamily fam;
  fam.name = "tv";
  fam.f = [](double x) { return 0.5 * std::abs(x - 1.0); };
  fam.f_prime = [](double x) { return x < 1.0 ? -0.5 : (x > 1.0 ? 0.5 : 0.0); };
  fam.f_at_zero = 0.5;
  fam.slope_at_infinity = 0.5;
  fam.f_prime_at_zero = -0.5;
  fam.f_prime_at_infinity = 0.5;
  fam.smooth = false;
  return fam;
}

}  // namespace families

DivergenceFamily family_from_name(const std::string& name) {
  if (name == "kl") return families::kullback_leibler();
  if (name == "reverse-kl") return families::reverse_kullback_leibler();
  if (name == "hellinger2") return families::squared_hellinger();
  if (name == "chi2") return families::chi_squared();
  if (name == "tv") return families::total_variation();
  if (name.rfind("alpha:", 0) == 0) {
    double a = 0.0;
    try {
      std::size_t used = 0;
      a = std::stod(name.substr(6), &used);
      if (used != name.size() - 6) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      raise(ErrorCode::UnknownFamily, "cannot parse alpha value in '" + name + "'");
    }
    return families::alpha_divergence(a);
  }
  raise(ErrorCode::UnknownFamily, "unknown divergence family '" + name + "'");
}

void check_family(const DivergenceFamily& fam) {
  if (!fam.f || !fam.f_prime) raise(ErrorCode::Config, fam.name + ": f and f_prime are required");
  if (std::abs(fam.f(1.0)) > 1e-14) raise(ErrorCode::Config, fam.name + ": f(1) != 0");
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> logu(std::log(1e-4), std::log(1e4));
  for (int k = 0; k < 1000; ++k) {
    double t[3] = {std::exp(logu(rng)), std::exp(logu(rng)), std::exp(logu(rng))};
    std::sort(std::begin(t), std::end(t));
    const auto [x, y, z] = t;
    if (!(x < y && y < z)) continue;
    const double chord = ((z - y) * fam.f(x) + (y - x) * fam.f(z)) / (z - x);
    if (fam.f(y) > chord + 1e-12 * (1.0 + std::abs(chord))) {
      raise(ErrorCode::Config, fam.name + ": f is not convex");
    }
  }
}

double divergence_integral(const Grid& grid, std::span<const double> h, std::span<const double> p,
                           const DivergenceFamily& fam) {
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double term = 0.0;
    if (p[i] > 0.0 && h[i] > 0.0) {
      term = fam.f(h[i] / p[i]) * p[i];
    } else if (p[i] > 0.0) {
      term = fam.f_at_zero == kInf ? kInf : p[i] * fam.f_at_zero;
    } else if (h[i] > 0.0) {
      term = fam.slope_at_infinity == kInf ? kInf : h[i] * fam.slope_at_infinity;
    }
    const double w = grid.weight(i);
    if (w > 0.0) total += w * term;
  }
  return total;
}

double eval_divergence(const GriddedDensity& h, const GriddedDensity& p, const DivergenceFamily& fam) {
  require_same_grid(h.grid(), p.grid(), "eval_divergence");
  const double d = divergence_integral(h.grid(), h.values(), p.values(), fam);
  if (d < -1e-10) {
    std::ostringstream os;
    os << fam.name << " divergence evaluated to " << d;
    raise(ErrorCode::NumericalNegativity, os.str());
  }
  return std::max(d, 0.0);
}

DivergenceFamily reverse_family(const DivergenceFamily& fam) {
  DivergenceFamily r;
  r.name = "reverse(" + fam.name + ")";
  auto f = fam.f;
  auto fp = fam.f_prime;
  r.f = [f](double x) { return x * f(1.0 / x); };
  r.f_prime = [f, fp](double x) {
    const double u = 1.0 / x;
    return f(u) - u * fp(u);
  };
  // g left empty: inverted numerically.
  r.f_at_zero = fam.slope_at_infinity;
  r.slope_at_infinity = fam.f_at_zero;
  // f~'(x) = f(1/x) - f'(1/x)/x; its limits follow from those of f.
  r.f_prime_at_zero = -kInf;
  r.f_prime_at_infinity = fam.f_at_zero;
  r.smooth = fam.smooth;
  r.alpha = fam.alpha ? std::optional<double>(1.0 - *fam.alpha) : std::nullopt;
  return r;
}

double g_eval(const DivergenceFamily& fam, double y) {
  if (!fam.smooth) raise(ErrorCode::NonSmoothFamily, fam.name + " has no single-valued inverse derivative");
  if (fam.g) return fam.g(y);
  if (y <= fam.f_prime_at_zero) return 0.0;
  if (y >= fam.f_prime_at_infinity) return kInf;
  // Bracket in log space around 1, then solve f'(x) = y.
  double lo = 1.0, hi = 1.0;
  while (fam.f_prime(lo) > y) {
    lo *= 0.5;
    if (lo < 1e-300) return 0.0;
  }
  while (fam.f_prime(hi) < y) {
    hi *= 2.0;
    if (hi > 1e300) return kInf;
  }
  if (lo == hi) return lo;
  auto fn = [&](double s) { return fam.f_prime(std::exp(s)) - y; };
  boost::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::bisect(
      fn, std::log(lo), std::log(hi),
      [](double l, double u) { return std::abs(u - l) <= 1e-13; }, iters);
  return std::exp(0.5 * (a + b));
}

}  // namespace fdband
