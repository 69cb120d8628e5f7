#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "fdband/grid.hpp"

namespace fdband {

/// Convex generator f with f(1) = 0, its (sub)derivative and the inverse of
/// the derivative. `g` may be empty, in which case g_eval inverts f_prime
/// numerically.
struct DivergenceFamily {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> f_prime;
  std::function<double(double)> g;
  double f_at_zero = 0.0;           // lim_{t->0+} f(t), may be +inf
  double slope_at_infinity = 0.0;   // lim_{t->inf} f(t)/t, may be +inf
  double f_prime_at_zero = 0.0;     // inf of f_prime, may be -inf
  double f_prime_at_infinity = 0.0; // sup of f_prime, may be +inf
  bool smooth = true;
  std::optional<double> alpha;
};

namespace families {

DivergenceFamily kullback_leibler();
DivergenceFamily reverse_kullback_leibler();
DivergenceFamily squared_hellinger();
DivergenceFamily chi_squared();
/// f(x) = (x^a - a x - (1 - a)) / (a (a - 1)), a not in {0, 1}.
DivergenceFamily alpha_divergence(double alpha);
DivergenceFamily total_variation();

}  // namespace families

/// Parses "kl", "reverse-kl", "hellinger2", "chi2", "alpha:<value>", "tv".
DivergenceFamily family_from_name(const std::string& name);

/// Validates f(1) = 0 and convexity on random triples. Throws Config.
void check_family(const DivergenceFamily& fam);

/// D_f(h || p) with the lower-semicontinuous conventions at h = 0 or p = 0.
double eval_divergence(const GriddedDensity& h, const GriddedDensity& p, const DivergenceFamily& fam);

/// Same integral for arbitrary nonnegative tabulations (used on unnormalized
/// iterates). Does not clamp or check sign.
double divergence_integral(const Grid& grid, std::span<const double> h, std::span<const double> p,
                           const DivergenceFamily& fam);

/// f~(x) = x f(1/x), so that D_f(p || h) = D_{f~}(h || p).
DivergenceFamily reverse_family(const DivergenceFamily& fam);

/// Generalized inverse of f_prime: 0 below the range of f_prime, +inf above
/// it. Throws NonSmoothFamily for families without a single-valued inverse.
double g_eval(const DivergenceFamily& fam, double y);

}  // namespace fdband
