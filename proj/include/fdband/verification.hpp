#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdband/band.hpp"
#include "fdband/calibration.hpp"
#include "fdband/robust_test.hpp"

namespace fdband {

/// Outcome of a sampling probe of the saddle-point inequality.
struct ProbeReport {
  long long samples = 0;
  /// max over samples of objective(h0, h1) - objective(q0, q1).
  double max_violation = 0.0;
  std::string argmax_descriptor;
  double tolerance = 0.0;
  double reference_value = 0.0;
  /// 20-bin histogram of per-sample violations over [hist_min, hist_max].
  std::vector<long long> histogram;
  double hist_min = 0.0;
  double hist_max = 0.0;

  bool passed() const { return max_violation <= tolerance; }
};

/// Default probe tolerance 1e-6 + 10 / n.
double probe_tolerance(std::size_t n);

/// Random band member: lower + t r with a smooth random r >= 0 built from five
/// bumps, t chosen by bisection so that the result has unit mass.
GriddedDensity sample_band_member(const BandModel& band, std::uint64_t seed);

/// Random ball member p exp(s z) / Z with a zero-mean smooth field z and s >= 0
/// chosen so that the divergence is u epsilon, u ~ U(0.1, 1). `fixed_s`
/// bypasses the search.
GriddedDensity sample_ball_member(const UncertaintyBall& ball, std::uint64_t seed,
                                  std::optional<double> fixed_s = std::nullopt);

using Sampler = std::function<GriddedDensity(std::uint64_t seed)>;

Sampler band_sampler(const BandModel& band);
Sampler ball_sampler(const UncertaintyBall& ball);
/// (1 - tau) anchor + tau h with h from `base` and tau ~ U(0, 1). Stays in
/// any convex set containing both; used to probe near a known member.
Sampler anchored_sampler(Sampler base, const GriddedDensity& anchor);

/// Evaluates weighted_error(rule, h0, h1) - weighted_error(rule, q0, q1) on
/// `count` sampled pairs (count >= 100).
ProbeReport saddle_probe(const DecisionRule& rule, const Sampler& feasible0, const Sampler& feasible1, long long count,
                         std::uint64_t seed, std::optional<double> tolerance = std::nullopt);

/// Same inequality for the N-fold product test (N in {2, 3}) that compares
/// prod q1(x_i) / q0(x_i) with lambda. Even samples use N identical factors,
/// odd samples independent factors.
ProbeReport product_saddle_probe(const DecisionRule& rule, const Sampler& feasible0, const Sampler& feasible1, int N,
                                 long long count, std::uint64_t seed, std::optional<double> tolerance = std::nullopt);
ProbeReport product_saddle_probe(const DecisionRule& rule, const BandModel& band0, const BandModel& band1, int N,
                                 long long count, std::uint64_t seed, std::optional<double> tolerance = std::nullopt);

struct BruteForceResult {
  std::vector<double> q0;
  std::vector<double> q1;
  double value;
  std::vector<double> step0;  // lattice step per coordinate
  std::vector<double> step1;
  long long candidates0 = 0;
  long long candidates1 = 0;
  /// With a target pair: smallest distance (in lattice steps, maximum over
  /// the free coordinates) from the target to any lattice pair whose value is
  /// within the lattice discretization error of the maximum.
  std::optional<double> target_distance_steps;
  /// Distance (in lattice steps) from the target to the single argmax.
  std::optional<double> argmax_distance_steps;
};

/// Exhaustive maximization of sum_x min(h1(x), lambda h0(x)) over band
/// members on a lattice with `resolution` steps per free coordinate.
/// Requires k <= 5 support points and resolution <= 400.
BruteForceResult brute_force_band_lfds(const BandModel& band0, const BandModel& band1, double lambda, int resolution,
                                       const std::optional<std::pair<std::vector<double>, std::vector<double>>>&
                                           target = std::nullopt);

struct ContainmentReport {
  long long count;
  double ball_in_band;  // fraction of ball samples pointwise inside the band
  double band_in_ball;  // fraction of band samples with divergence <= epsilon
};

ContainmentReport containment_probe(const UncertaintyBall& ball, const BandModel& band, long long count,
                                    std::uint64_t seed);

/// Negative-control pair: moves `shift` of q0's mass from the region where
/// the rule decides H1 to its complement and renormalizes.
GriddedDensity perturb_lfd(const DecisionRule& rule, double shift = 0.01);

/// Discrete k-point instance with bands lower = 0.7 p, upper = min(1.3 p, 1).
struct DiscreteInstance {
  GriddedDensity p0;
  GriddedDensity p1;
  BandModel band0;
  BandModel band1;
};

DiscreteInstance discrete_instance(const std::vector<double>& p0, const std::vector<double>& p1, double spread = 0.3);
/// Random 3-point instance from the seed.
DiscreteInstance random_discrete_instance(std::uint64_t seed, std::size_t k = 3);

}  // namespace fdband
