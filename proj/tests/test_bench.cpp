#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tear/bench.hpp"

using namespace tear;
using namespace tear::bench;

namespace {

Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double theta) {
  return Eigen::AngleAxisd(theta, axis.normalized()).toRotationMatrix();
}

// Peak resident memory of a child that generates n pairs and runs a short,
// node-capped registration.
std::size_t child_peak(std::size_t n) {
  int fd[2];
  if (pipe(fd) != 0) return 0;
  const pid_t pid = fork();
  if (pid == 0) {
    close(fd[0]);
    SyntheticConfig g;
    g.n = n;
    g.outlier_ratio = 0.99;
    g.unit_cube = true;
    const auto s = generate_synthetic(g);
    SolverConfig cfg;
    cfg.max_nodes = 8;
    try {
      register_pairs(s.pairs, cfg);
    } catch (const std::exception&) {
    }
    const std::size_t peak = peak_memory_bytes();
    if (write(fd[1], &peak, sizeof peak) != sizeof peak) _exit(1);
    _exit(0);
  }
  close(fd[1]);
  std::size_t peak = 0;
  if (read(fd[0], &peak, sizeof peak) != sizeof peak) peak = 0;
  close(fd[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  return peak;
}

}  // namespace

TEST(Bench, GenerationCountsAndDeterminism) {
  SyntheticConfig g;
  g.n = 10000;
  g.outlier_ratio = 0.95;
  g.seed = 7;
  const auto a = generate_synthetic(g);
  const auto b = generate_synthetic(g);
  EXPECT_EQ(a.gt.inlier_count(), 500u);
  EXPECT_EQ(a.pairs.size(), 10000u);
  EXPECT_EQ(a.gt.inlier_mask.size(), 10000u);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    ASSERT_EQ(a.pairs.x[i], b.pairs.x[i]);
    ASSERT_EQ(a.pairs.y[i], b.pairs.y[i]);
    ASSERT_EQ(a.pairs.xi[i], 5.54 * 0.01);
  }
  EXPECT_EQ(a.gt.pose.R, b.gt.pose.R);
  EXPECT_EQ(a.gt.pose.t, b.gt.pose.t);
  EXPECT_TRUE(is_rotation(a.gt.pose.R, 1e-12));
  EXPECT_LE(a.gt.pose.t.cwiseAbs().maxCoeff(), 1.0);
  g.seed = 8;
  EXPECT_NE(generate_synthetic(g).pairs.y[0], a.pairs.y[0]);
}

TEST(Bench, NoiseQuantile) {
  SyntheticConfig g;
  g.n = 100000;
  g.outlier_ratio = 0.0;
  g.seed = 3;
  const auto s = generate_synthetic(g);
  std::size_t within = 0;
  for (std::size_t i = 0; i < s.pairs.size(); ++i)
    within += (s.pairs.y[i] - s.gt.pose.R * s.pairs.x[i] - s.gt.pose.t).norm() <= 5.54 * g.sigma;
  EXPECT_GE(within, 99000u);
}

TEST(Bench, OutliersKeepSourcePoints) {
  SyntheticConfig g;
  g.n = 2000;
  g.outlier_ratio = 0.5;
  g.seed = 4;
  const auto s = generate_synthetic(g);
  g.outlier_ratio = 0.0;
  const auto clean = generate_synthetic(g);
  // The rotation, translation and x draws come before any outlier choice.
  EXPECT_EQ(s.gt.pose.R, clean.gt.pose.R);
  for (std::size_t i = 0; i < s.pairs.size(); ++i) ASSERT_EQ(s.pairs.x[i], clean.pairs.x[i]);
  double var = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    if (s.gt.inlier_mask[i]) continue;
    var += s.pairs.y[i].squaredNorm();
    ++m;
  }
  EXPECT_NEAR(var / (3.0 * m), g.tau * g.tau, 0.15);
}

TEST(Bench, UnitCube) {
  SyntheticConfig g;
  g.n = 5000;
  g.unit_cube = true;
  const auto s = generate_synthetic(g);
  Eigen::Vector3d lo = s.pairs.x[0], hi = s.pairs.x[0];
  for (const auto& x : s.pairs.x) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  EXPECT_GE(lo.minCoeff(), 0.0);
  EXPECT_LE(hi.maxCoeff(), 1.0 + 1e-15);
  EXPECT_NEAR((hi - lo).maxCoeff(), 1.0, 1e-12);
}

TEST(Bench, InvalidConfig) {
  SyntheticConfig g;
  g.n = 0;
  EXPECT_THROW(generate_synthetic(g), std::invalid_argument);
  g.n = 10;
  g.outlier_ratio = 1.0;
  EXPECT_THROW(generate_synthetic(g), std::invalid_argument);
}

TEST(Bench, RotationErrorExamples) {
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  EXPECT_DOUBLE_EQ(rotation_error(I, I), 0.0);
  EXPECT_NEAR(rotation_error(axis_rotation(Eigen::Vector3d::UnitZ(), kPi / 2), I), 90.0, 1e-12);
  EXPECT_NEAR(rotation_error(axis_rotation(Eigen::Vector3d::UnitX(), kPi), I), 180.0, 1e-12);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, kPi);
  for (int k = 0; k < 200; ++k) {
    const Eigen::Matrix3d R = random_rotation(rng);
    const double theta = u(rng);
    const Eigen::Matrix3d Ra = axis_rotation({n(rng), n(rng), n(rng)}, theta);
    EXPECT_NEAR(rotation_error(R * Ra, R), theta * 180.0 / kPi, 1e-9 * 180.0 / kPi);
  }
  Eigen::Matrix3d bad = I;
  bad(0, 0) = 2.0;
  EXPECT_THROW(rotation_error(bad, I), std::invalid_argument);
}

TEST(Bench, F1Examples) {
  const std::vector<bool> mask{true, true, true, true, false, false, false, false};
  EXPECT_DOUBLE_EQ(f1_score({0, 1, 2, 3}, mask), 1.0);
  EXPECT_DOUBLE_EQ(f1_score({}, mask), 0.0);
  // 2 of 4 predicted are correct; 2 of 4 true inliers found.
  EXPECT_DOUBLE_EQ(f1_score({0, 1, 4, 5}, mask), 0.5);
  // precision 1, recall 1/4 -> 2 * 0.25 / 1.25.
  EXPECT_DOUBLE_EQ(f1_score({2}, mask), 0.4);
  EXPECT_DOUBLE_EQ(f1_score({4, 5}, mask), 0.0);
}

TEST(Bench, EvaluatePerfectResult) {
  SyntheticConfig g;
  g.n = 200;
  g.outlier_ratio = 0.5;
  g.sigma = 0.0;
  g.xi = 0.01;
  const auto s = generate_synthetic(g);
  RegistrationResult r;
  r.pose = s.gt.pose;
  for (std::size_t i = 0; i < g.n; ++i)
    if (s.gt.inlier_mask[i]) r.final_inliers.push_back(i);
  r.stage1.inliers = r.stage2.inliers = r.final_inliers;
  const auto m = evaluate(r, s.gt, preset("eth"));
  EXPECT_NEAR(m.re_deg, 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(m.te, 0.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  EXPECT_TRUE(m.recall_flag);
}

TEST(Bench, Presets) {
  EXPECT_DOUBLE_EQ(preset("3dmatch").deg, 15.0);
  EXPECT_DOUBLE_EQ(preset("3dmatch").length, 0.30);
  EXPECT_DOUBLE_EQ(preset("kitti").deg, 5.0);
  EXPECT_DOUBLE_EQ(preset("kitti").length, 0.60);
  EXPECT_DOUBLE_EQ(preset("eth").deg, 3.0);
  EXPECT_DOUBLE_EQ(preset("eth").length, 0.50);
  EXPECT_THROW(preset("nope"), std::invalid_argument);
}

TEST(Bench, SweepRows) {
  SweepConfig sc;
  sc.n_values = {300};
  sc.ratios = {0.8};
  sc.trials = 1;
  auto rows = sweep(sc);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].error.empty()) << rows[0].error;
  EXPECT_GT(rows[0].metrics.wall_time, 0.0);
  EXPECT_GT(rows[0].metrics.peak_memory, 0u);

  sc.n_values = {200, 2000};
  sc.ratios = {0.8, 0.9};
  sc.trials = 2;
  sc.threads = 2;
  rows = sweep(sc);
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_GE(r.metrics.f1, 0.0);
    EXPECT_LE(r.metrics.f1, 1.0);
    EXPECT_GE(r.metrics.re_deg, 0.0);
    EXPECT_LE(r.metrics.re_deg, 180.0);
  }
  // Trials are seeded by (seed, cell, trial), so a rerun matches.
  const auto again = sweep(sc);
  for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(rows[k].metrics.re_deg, again[k].metrics.re_deg);
  std::vector<double> small, large;
  for (const auto& r : rows) (r.n == 200 ? small : large).push_back(r.metrics.wall_time);
  EXPECT_LT(median(small), median(large));
}

TEST(Bench, SweepRecordsFailures) {
  SweepConfig sc;
  sc.n_values = {2};
  sc.ratios = {0.0};
  const auto rows = sweep(sc);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].error.empty());
}

TEST(Bench, Median) {
  EXPECT_DOUBLE_EQ(median(std::vector<double>{3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median(std::vector<double>{4, 1, 2, 3}), 2.5);
  EXPECT_TRUE(std::isnan(median(std::vector<double>{})));
}

TEST(Bench, PeakMemoryGrowsLinearly) {
  const std::size_t small = child_peak(100000);
  const std::size_t large = child_peak(1000000);
  ASSERT_GT(small, 0u);
  ASSERT_GT(large, 0u);
  EXPECT_LE(large, 20 * small);
  EXPECT_LE(large, std::size_t{4} << 30);
}
