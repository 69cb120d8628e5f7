#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "fdband/band.hpp"
#include "fdband/robust_test.hpp"
#include "fdband/verification.hpp"

using namespace fdband;
using fdband::testing::reference_calibration;
using fdband::testing::WarningCapture;

namespace {

GriddedMeasure constant_measure(double v) {
  return GriddedMeasure(Grid(0.0, 1.0, 16), std::vector<double>(16, v));
}

struct Instance {
  BandModel band0;
  BandModel band1;
};

std::vector<Instance> gaussian_instances() {
  WarningCapture quiet;
  const Grid g(-10.0, 10.0, 1024);
  std::vector<Instance> out;
  for (const auto& [m1, v1, a0, b0, a1, b1] :
       std::vector<std::array<double, 6>>{{1.0, 2.0, 0.9, 1.8, 0.85, 1.4},
                                          {2.0, 1.0, 0.7, 1.5, 0.8, 1.2},
                                          {0.5, 1.5, 0.95, 1.1, 0.9, 1.3}}) {
    out.push_back({scaled_band(gaussian_density(g, -1.0, 1.0), a0, b0),
                   scaled_band(gaussian_density(g, m1, v1), a1, b1)});
  }
  return out;
}

void expect_lfd_invariants(const BandModel& band0, const BandModel& band1, const LFDSolution& s) {
  EXPECT_TRUE(band0.contains(s.q0, 1e-10));
  EXPECT_TRUE(band1.contains(s.q1, 1e-10));
  EXPECT_NEAR(s.q0.total_mass(), 1.0, 1e-8);
  EXPECT_NEAR(s.q1.total_mass(), 1.0, 1e-8);
  EXPECT_LE(s.residual, 1e-10);
  const double lam = s.lambda;
  for (std::size_t i = 0; i < s.q0.size(); ++i) {
    const double q0 = s.q0[i], q1 = s.q1[i];
    const double scale = std::max(q0, q1);
    const Region r0 = s.regions0[i], r1 = s.regions1[i];
    if (r0 == Region::Middle && r1 == Region::Middle) {
      EXPECT_LE(std::abs(q1 - lam * q0), 1e-8 * scale) << i;
    }
    // Clip labels of q1 refer to c1 = lambda, those of q0 to 1 / c0; the two
    // coincide whenever the doubly-middle region carries mass.
    const double lam0 = 1.0 / s.c0;
    if (r1 == Region::LowerClip) EXPECT_GE(q1, lam * q0 - 1e-8 * scale) << i;
    if (r1 == Region::UpperClip) EXPECT_LE(q1, lam * q0 + 1e-8 * scale) << i;
    if (r0 == Region::UpperClip) EXPECT_GE(q1, lam0 * q0 - 1e-8 * scale) << i;
    if (r0 == Region::LowerClip) EXPECT_LE(q1, lam0 * q0 + 1e-8 * scale) << i;
  }
  if (doubly_middle_mass(s.q0, s.regions0, s.regions1) > 0.0) {
    EXPECT_LE(std::abs(s.c0 * s.c1 - 1.0), 1e-6);
  }
}

}  // namespace

TEST(Band, ScaledBandConstruction) {
  WarningCapture quiet;
  const auto p = gaussian_density(fdband::testing::reference_grid(), -1.0, 1.0);
  const auto collapsed = scaled_band(p, 1.0, 1.0);
  EXPECT_TRUE(collapsed.contains(p, 0.0));
  const auto band = scaled_band(p, 0.9047, 2.2519);
  EXPECT_NEAR(band.lower()[2000], 0.9047 * p[2000], 1e-15);
  EXPECT_NEAR(band.upper()[2000], 2.2519 * p[2000], 1e-15);
  try {
    scaled_band(p, 1.2, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleBand);
  }
  EXPECT_THROW(scaled_band(p, 0.5, 0.8), Error);
  EXPECT_THROW(scaled_band(p, 0.9, 0.8), Error);
}

TEST(Band, BandModelValidation) {
  EXPECT_THROW(BandModel(constant_measure(0.6), constant_measure(0.5)), Error);
  try {
    BandModel(constant_measure(1.2), constant_measure(2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleBand);
  }
  EXPECT_THROW(BandModel(constant_measure(0.5), GriddedMeasure(Grid(0.0, 2.0, 16), std::vector<double>(16, 1.0))),
               Error);
}

TEST(Band, ClipUpdatePointwise) {
  const BandModel band(constant_measure(0.45), constant_measure(1.125));
  EXPECT_DOUBLE_EQ(clip_update(constant_measure(0.2), band)[0], 0.45);
  EXPECT_DOUBLE_EQ(clip_update(constant_measure(0.7), band)[0], 0.7);
  EXPECT_DOUBLE_EQ(clip_update(constant_measure(3.0), band)[0], 1.125);
  std::vector<double> inside(16);
  for (int i = 0; i < 16; ++i) inside[i] = 0.5 + 0.03 * i;
  const GriddedMeasure r(Grid(0.0, 1.0, 16), inside);
  EXPECT_EQ(clip_update(r, band).values(), inside);
  const auto labels = clip_regions(std::vector<double>{0.2, 0.45, 0.7, 1.125, 2.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2,
                                                       0.2, 0.2, 0.2, 0.2, 0.2},
                                   band);
  EXPECT_EQ(labels[0], Region::LowerClip);
  EXPECT_EQ(labels[1], Region::Middle);
  EXPECT_EQ(labels[2], Region::Middle);
  EXPECT_EQ(labels[3], Region::Middle);
  EXPECT_EQ(labels[4], Region::UpperClip);
}

TEST(Band, NormalizedClipExamples) {
  WarningCapture quiet;
  const Grid g(-10.0, 10.0, 1024);
  const auto p = gaussian_density(g, 0.0, 1.0);
  const auto band = scaled_band(p, 0.8, 1.5);
  std::vector<double> wiggle(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) wiggle[i] = p[i] * (1.0 + 0.1 * std::sin(g.x(i)));
  const auto q = normalize(GriddedMeasure(g, wiggle));
  ASSERT_TRUE(band.contains(q));

  const auto same = normalized_clip(q, band);
  EXPECT_NEAR(same.c, 1.0, 1e-9);
  EXPECT_LE(sup_norm_difference(same.density.values(), q.values()), 1e-9);

  std::vector<double> twice(q.values());
  for (double& v : twice) v *= 2.0;
  const auto half = normalized_clip(GriddedMeasure(g, twice), band);
  EXPECT_NEAR(half.c, 0.5, 1e-9);

  const auto collapsed = scaled_band(p, 1.0, 1.0);
  for (const auto& dir : {q, gaussian_density(g, 3.0, 0.5)}) {
    const auto out = normalized_clip(dir, collapsed);
    EXPECT_LE(sup_norm_difference(out.density.values(), p.values()), 1e-12);
  }
  try {
    normalized_clip(GriddedMeasure(g, std::vector<double>(g.size(), 0.0)), band);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroDirection);
  }
}

TEST(Band, CollapsedBandsReturnNominals) {
  WarningCapture quiet;
  const Grid g = fdband::testing::reference_grid();
  const auto p0 = gaussian_density(g, -1.0, 1.0);
  const auto p1 = gaussian_density(g, 1.0, 2.0);
  const auto s = solve_band_lfds(scaled_band(p0, 1.0, 1.0), scaled_band(p1, 1.0, 1.0));
  EXPECT_LE(sup_norm_difference(s.q0.values(), p0.values()), 1e-12);
  EXPECT_LE(sup_norm_difference(s.q1.values(), p1.values()), 1e-12);
}

TEST(Band, InvariantsOnCalibratedBands) {
  const auto& cal = reference_calibration();
  const auto s = solve_band_lfds(cal.band0, cal.band1);
  expect_lfd_invariants(cal.band0, cal.band1, s);
  EXPECT_NEAR(s.lambda, 1.0, 5e-3);
}

TEST(Band, InvariantsOnGaussianInstances) {
  for (const auto& inst : gaussian_instances()) {
    const auto s = solve_band_lfds(inst.band0, inst.band1);
    expect_lfd_invariants(inst.band0, inst.band1, s);
    EXPECT_LE(s.lambda_interval.first, s.lambda);
    EXPECT_GE(s.lambda_interval.second, s.lambda);
  }
}

TEST(Band, WarmStartReproducesCalibratedPair) {
  const auto& cal = reference_calibration();
  SolverOptions opts;
  opts.initial_q1 = cal.q1.values();
  const auto s = solve_band_lfds(cal.band0, cal.band1, opts);
  EXPECT_LE(sup_norm_difference(s.q0.values(), cal.q0.values()), 1e-4);
  EXPECT_LE(sup_norm_difference(s.q1.values(), cal.q1.values()), 1e-4);
}

TEST(Band, SaddleValueIsLeastFavorable) {
  for (const auto& inst : gaussian_instances()) {
    const auto s = solve_band_lfds(inst.band0, inst.band1);
    const auto rule = make_rule(s);
    const double v = weighted_error(rule, s.q0, s.q1);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto h0 = sample_band_member(inst.band0, seed);
      const auto h1 = sample_band_member(inst.band1, seed + 1000);
      EXPECT_LE(weighted_error(rule, h0, h1), v + 1e-10);
    }
  }
}

TEST(Band, EnlargedBandDoesNotHelpDetector) {
  WarningCapture quiet;
  const Grid g(-10.0, 10.0, 1024);
  const auto p0 = gaussian_density(g, -1.0, 1.0);
  const auto p1 = gaussian_density(g, 1.0, 2.0);
  const auto band1 = scaled_band(p1, 0.85, 1.4);
  const auto small = solve_band_lfds(scaled_band(p0, 0.9, 1.8), band1);
  const auto large = solve_band_lfds(scaled_band(p0, 0.8, 2.2), band1);
  // The old pair is feasible for the larger band, so at the new threshold it
  // cannot do worse than the new saddle point.
  const auto rule = make_rule(large);
  EXPECT_GE(weighted_error(rule, large.q0, large.q1), weighted_error(rule, small.q0, small.q1) - 1e-8);

  const auto inst = discrete_instance({0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}, 0.2);
  const auto wide = discrete_instance({0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}, 0.3);
  for (double lam : {0.5, 1.0, 2.0}) {
    const auto v_small = brute_force_band_lfds(inst.band0, inst.band1, lam, 100).value;
    const auto v_wide = brute_force_band_lfds(wide.band0, inst.band1, lam, 100).value;
    EXPECT_GE(v_wide, v_small - 1e-8) << lam;
  }
}

TEST(Band, Deterministic) {
  const auto& cal = reference_calibration();
  const auto a = solve_band_lfds(cal.band0, cal.band1);
  const auto b = solve_band_lfds(cal.band0, cal.band1);
  EXPECT_EQ(a.q0.values(), b.q0.values());
  EXPECT_EQ(a.q1.values(), b.q1.values());
  EXPECT_EQ(a.lambda, b.lambda);
}

TEST(Band, Failures) {
  const auto& cal = reference_calibration();
  SolverOptions opts;
  opts.max_iters = 1;
  try {
    solve_band_lfds(scaled_band(cal.ball0.nominal, 0.9, 2.0), scaled_band(cal.ball1.nominal, 0.8, 1.3), opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
  }
  try {
    solve_band_lfds(cal.band0, cal.band0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateOverlap);
  }
  SolverOptions bad;
  bad.damping = 0.0;
  EXPECT_THROW(solve_band_lfds(cal.band0, cal.band1, bad), Error);
}
