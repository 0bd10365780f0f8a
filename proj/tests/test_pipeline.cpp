#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "tear/bench.hpp"
#include "tear/pipeline.hpp"
#include "tear/scalar_oracles.hpp"

using namespace tear;

namespace {

AngleBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double wa = kTwoPi * std::pow(u01(rng), 2.0), wb = kPi * std::pow(u01(rng), 2.0);
  const double a = (kTwoPi - wa) * u01(rng), b = (kPi - wb) * u01(rng);
  return {{a, a + wa}, {b, b + wb}};
}

PointPairSet random_pairs(std::mt19937_64& rng, std::size_t n, bool per_pair_xi) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> ux(0.02, 0.4);
  PointPairSet p;
  const double shared = ux(rng);
  for (std::size_t i = 0; i < n; ++i)
    p.push_back({g(rng), g(rng), g(rng)}, {g(rng), g(rng), g(rng)}, per_pair_xi ? ux(rng) : shared);
  return p;
}

// Lower bound, grid minimum and center value of one box.
template <FirstStageLoss Loss>
void check_sandwich(const AxisBounder<Loss>& b, const AngleBox& box) {
  const int m = 32;
  double grid = 1e300;
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      const double a = box.alpha.lo + box.alpha.width() * i / m;
      const double be = box.beta.lo + box.beta.width() * j / m;
      grid = std::min(grid, b.at_direction(angles_to_unit(a, be)).value);
    }
  }
  const double lo = b.lower(box).value, up = b.upper(box).value;
  ASSERT_LE(lo, grid + 1e-9);
  ASSERT_LE(grid, up + 1e-9);
}

bench::Synthetic noiseless(std::size_t n, std::uint64_t seed) {
  bench::SyntheticConfig g;
  g.n = n;
  g.outlier_ratio = 0.0;
  g.sigma = 0.0;
  g.xi = 0.05;
  g.seed = seed;
  return bench::generate_synthetic(g);
}

}  // namespace

TEST(Pipeline, Tear1UpperExamples) {
  const auto s = noiseless(40, 3);
  const auto [a, be] = unit_to_angles(s.gt.pose.R.row(0).transpose());
  PointPairSet shifted = s.pairs;
  for (auto& y : shifted.y) y.x() -= s.gt.pose.t.x();
  const AngleBox point{{a, a}, {be, be}};
  EXPECT_NEAR(tear1_upper(shifted, point).value, 0.0, 1e-12);

  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    const auto p = random_pairs(rng, 30, k % 2);
    const AngleBox box = random_box(rng);
    const ScalarSolution up = tear1_upper(p, box);
    double cap = 0.0;
    for (double v : p.xi) cap += v;
    EXPECT_LE(up.value, cap + 1e-12);
    TruncAbsPointInstance inst;
    const Eigen::Vector3d r = angles_to_unit(box.alpha.center(), box.beta.center());
    for (std::size_t i = 0; i < p.size(); ++i) {
      inst.a.push_back(p.y[i].x() - r.dot(p.x[i]));
      inst.xi.push_back(p.xi[i]);
    }
    EXPECT_NEAR(up.value, oracle::oracle_trunc_abs_point(inst).value, 1e-9);
  }
}

TEST(Pipeline, Tear1LowerExamples) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ua(0.0, kTwoPi), ub(0.0, kPi);
  for (int k = 0; k < 100; ++k) {
    const auto p = random_pairs(rng, 30, k % 2);
    const double a = ua(rng), be = ub(rng);
    const AngleBox point{{a, a}, {be, be}};
    EXPECT_NEAR(tear1_lower(p, point).value, tear1_upper(p, point).value, 1e-9);
    const AngleBox box = random_box(rng);
    EXPECT_LE(tear1_lower(p, box).value, tear1_upper(p, box).value + 1e-9);
  }
}

TEST(Pipeline, SandwichAllFirstStageBounders) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 200; ++k) {
    const auto p = random_pairs(rng, 25, k % 3 == 0);
    const AngleBox box = random_box(rng);
    check_sandwich(make_first_stage_bounder<FirstStageLoss::tear>(p, k % 2), box);
    check_sandwich(make_first_stage_bounder<FirstStageLoss::cm>(p, k % 2), box);
    check_sandwich(make_first_stage_bounder<FirstStageLoss::tls>(p, k % 2), box);
  }
}

TEST(Pipeline, SandwichStage2) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const auto p = random_pairs(rng, 25, true);
    IndexSet all(p.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const UnitVector3 r1(Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized());
    SolverConfig cfg;
    cfg.align_stage2 = k % 2;
    const auto b = make_stage2_bounder(p, all, r1, p.xi, cfg);
    const double w = kTwoPi * std::pow(u01(rng), 2.0);
    const double a0 = (kTwoPi - w) * u01(rng);
    const AlphaInterval iv{{a0, a0 + w}};
    double grid = 1e300;
    for (int i = 0; i <= 64; ++i) {
      const double a = a0 + w * i / 64;
      const double be = beta_of_alpha(b.r1(), a);
      grid = std::min(grid, AxisBounder<FirstStageLoss::tear>(detail::make_axis_data(
                                p, 1, &all, p.xi, cfg.center ? detail::centroid(p, &all) : Eigen::Vector3d::Zero(),
                                cfg.align_stage2 ? frame_with_third_axis(r1.vec()) : Eigen::Matrix3d::Identity()))
                                .at_direction(angles_to_unit(a, be))
                                .value);
    }
    ASSERT_LE(b.lower(iv).value, grid + 1e-9);
    ASSERT_LE(grid, b.upper(iv).value + 1e-9);
  }
}

TEST(Pipeline, BetaOfAlpha) {
  const UnitVector3 z(Eigen::Vector3d::UnitZ());
  const auto r = beta_of_alpha_range(z, AlphaInterval{{0.3, 2.0}});
  EXPECT_NEAR(r.lo, kPi / 2, 1e-11);
  EXPECT_NEAR(r.hi, kPi / 2, 1e-11);

  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    if (k % 25 == 0) v.z() = 0.0;
    const UnitVector3 r1(v.normalized());
    const double w = kTwoPi * std::pow(u01(rng), 2.0);
    const double a0 = (kTwoPi - w) * u01(rng);
    const AlphaInterval iv{{a0, a0 + w}};
    const auto range = beta_of_alpha_range(r1, iv);
    for (int i = 0; i < 1000; ++i) {
      const double a = a0 + w * i / 999;
      const double be = beta_of_alpha(r1, a);
      ASSERT_TRUE(range.contains(be));
      ASSERT_NEAR(angles_to_unit(a, be).dot(r1.vec()), 0.0, 1e-12);
    }
    const auto pt = beta_of_alpha_range(r1, AlphaInterval{{a0, a0}});
    if (r1[2] != 0.0) {
      EXPECT_LE(pt.width(), 1e-11);
    }
  }
}

TEST(Pipeline, DeriveStage2Thresholds) {
  PointPairSet p;
  p.push_back({1, 0, 0}, {1.0, 0, 0}, 0.1);
  p.push_back({1, 0, 0}, {1.1, 0, 0}, 0.1);
  p.push_back({1, 0, 0}, {1.04, 0, 0}, 0.1);
  StageSolution s1;
  s1.r = UnitVector3(Eigen::Vector3d::UnitX());
  s1.t = 0.0;
  s1.inliers = {0, 1, 2};
  const auto xi2 = derive_stage2_thresholds(p, s1);
  ASSERT_EQ(xi2.size(), 3u);
  EXPECT_DOUBLE_EQ(xi2[0], 0.1);
  EXPECT_NEAR(xi2[1], 0.0, 1e-15);
  EXPECT_NEAR(xi2[2], 0.06, 1e-12);
  for (double v : xi2) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 0.1);
  }
}

TEST(Pipeline, SinglePair) {
  PointPairSet p;
  p.push_back({0.3, -0.2, 1.0}, {2.0, 1.0, -1.0}, 0.1);
  EXPECT_NEAR(solve_tear1(p, {}).value, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(solve_cm1(p, {}).value, 1.0);
  EXPECT_NEAR(solve_tls1(p, {}).value, 0.0, 1e-12);
}

TEST(Pipeline, NoiselessStage1ReachesZero) {
  const auto s = noiseless(100, 21);
  SolverConfig cfg;
  cfg.min_resolution = 1e-12;
  const auto st = solve_tear1(s.pairs, cfg);
  double cap = 0.0;
  for (double v : s.pairs.xi) cap += v;
  EXPECT_LE(st.value, detail::default_epsilon(cap));
  EXPECT_EQ(st.inliers.size(), 100u);
  EXPECT_EQ(st.report.termination, bnb::Termination::converged);
}

TEST(Pipeline, NoiselessStage2RecoversSecondRow) {
  const auto s = noiseless(100, 22);
  IndexSet all(100);
  for (std::size_t i = 0; i < 100; ++i) all[i] = i;
  const UnitVector3 r1(s.gt.pose.R.row(0).transpose());
  const auto st = solve_tear2(s.pairs, all, r1, s.pairs.xi, {});
  const Eigen::Vector3d r2_true = s.gt.pose.R.row(1).transpose();
  EXPECT_LE(std::acos(std::clamp(st.r.dot(r2_true), -1.0, 1.0)), 1e-3);
  EXPECT_NEAR(st.r.dot(r1.vec()), 0.0, 1e-9);
}

TEST(Pipeline, RegisterIdentity) {
  std::mt19937_64 rng(30);
  std::normal_distribution<double> g(0.0, 1.0);
  PointPairSet p;
  for (int i = 0; i < 30; ++i) {
    const Eigen::Vector3d x(g(rng), g(rng), g(rng));
    p.push_back(x, x, 0.07);
  }
  const auto r = register_pairs(p);
  EXPECT_LE((r.pose.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE(r.pose.t.norm(), 1e-9);
}

TEST(Pipeline, RegisterNoiseless) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = noiseless(100, seed);
    const auto r = register_pairs(s.pairs);
    EXPECT_LE(bench::rotation_error(r.pose.R, s.gt.pose.R), 1e-3);
    EXPECT_LE((r.pose.t - s.gt.pose.t).norm(), 1e-6);
  }
}

TEST(Pipeline, RegisterInvariants) {
  for (std::uint64_t seed : {5, 6}) {
    bench::SyntheticConfig g;
    g.n = 1000;
    g.outlier_ratio = 0.95;
    g.seed = seed;
    const auto s = bench::generate_synthetic(g);
    const auto r = register_pairs(s.pairs);
    EXPECT_NEAR(r.stage2.r.dot(r.stage1.r.vec()), 0.0, 1e-9);
    EXPECT_NEAR(r.stage1.r.vec().cross(r.stage2.r.vec()).norm(), 1.0, 1e-9);
    EXPECT_TRUE(std::includes(r.stage1.inliers.begin(), r.stage1.inliers.end(), r.stage2.inliers.begin(),
                              r.stage2.inliers.end()));
    for (std::size_t i : r.final_inliers)
      EXPECT_LE((s.pairs.y[i] - r.pose.R * s.pairs.x[i] - r.pose.t).norm(), s.pairs.xi[i]);
    for (std::size_t i : r.stage1.inliers)
      EXPECT_LE(std::abs(s.pairs.y[i].x() - r.stage1.r.dot(s.pairs.x[i]) - r.stage1.t), s.pairs.xi[i]);
    EXPECT_TRUE(is_rotation(r.pose.R, 1e-9));
    const auto m = bench::evaluate(r, s.gt, {});
    EXPECT_LE(m.re_deg, 2.0);
    EXPECT_LE(m.te, 0.05);
    EXPECT_GE(m.f1_stage2, 0.9);
    // Stage 1 tests one scalar residual, so it keeps every true inlier plus
    // the outliers that happen to fall inside the slab.
    std::size_t tp = 0;
    for (std::size_t i : r.stage1.inliers) tp += s.gt.inlier_mask[i];
    EXPECT_GE(tp, s.gt.inlier_count() * 98 / 100);
  }
}

TEST(Pipeline, InsufficientInliers) {
  std::mt19937_64 rng(40);
  PointPairSet p = random_pairs(rng, 3, false);
  for (auto& v : p.xi) v = 1e-9;
  EXPECT_THROW(register_pairs(p), InsufficientInliers);
  PointPairSet two = random_pairs(rng, 2, false);
  EXPECT_THROW(register_pairs(two), std::invalid_argument);
}

TEST(Pipeline, ConsensusExamples) {
  const auto s = noiseless(50, 8);
  EXPECT_DOUBLE_EQ(solve_cm1(s.pairs, {}).value, 50.0);
  bench::SyntheticConfig g;
  g.n = 200;
  g.outlier_ratio = 0.9;
  g.seed = 9;
  const auto t = bench::generate_synthetic(g);
  const auto cm = solve_cm1(t.pairs, {});
  EXPECT_GE(cm.value, static_cast<double>(t.gt.inlier_count()));
  EXPECT_EQ(cm.inliers.size(), static_cast<std::size_t>(cm.value));
}

TEST(Pipeline, TruncatedSquaresExamples) {
  bench::SyntheticConfig g;
  g.n = 100;
  g.outlier_ratio = 0.0;
  g.seed = 10;
  const auto s = bench::generate_synthetic(g);
  const auto st = solve_tls1(s.pairs, {});
  EXPECT_LE(st.value, 2.0 * 100 * g.sigma * g.sigma);
  double cap = 0.0;
  for (double v : s.pairs.xi) cap += v * v;
  EXPECT_LE(st.value, cap);
  EXPECT_LE(std::acos(std::clamp(st.r.dot(s.gt.pose.R.row(0).transpose()), -1.0, 1.0)), 0.02);
}

// Small instances against a dense grid with the exact inner 1-D solve.
TEST(Pipeline, SmallInstancesMatchGrid) {
  std::mt19937_64 rng(50);
  for (int k = 0; k < 3; ++k) {
    const auto p = random_pairs(rng, 12, k == 1);
    const auto check = [&](auto b, double value, double grid_step) {
      double grid = 1e300;
      const int m = 300;
      for (int i = 0; i <= m; ++i)
        for (int j = 0; j <= m; ++j)
          grid = std::min(grid, b.at_direction(angles_to_unit(kTwoPi * i / m, kPi * j / m)).value);
      EXPECT_LE(value, grid + detail::default_epsilon(b.scale()) + grid_step);
    };
    SolverConfig cfg;
    const auto tear = solve_tear1(p, cfg);
    check(make_first_stage_bounder<FirstStageLoss::tear>(p, false), tear.value, 0.0);
    const auto tls = solve_tls1(p, cfg);
    check(make_first_stage_bounder<FirstStageLoss::tls>(p, false), tls.value, 0.0);
    const auto cm = solve_cm1(p, cfg);
    check(make_first_stage_bounder<FirstStageLoss::cm>(p, false), static_cast<double>(p.size()) - cm.value, 0.0);
  }
}

TEST(Pipeline, ParseLoss) {
  EXPECT_EQ(parse_loss("tear"), FirstStageLoss::tear);
  EXPECT_EQ(parse_loss("cm"), FirstStageLoss::cm);
  EXPECT_EQ(parse_loss("tls"), FirstStageLoss::tls);
  EXPECT_THROW(parse_loss("l2"), std::invalid_argument);
}
