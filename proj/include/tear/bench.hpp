#pragma once

// Synthetic correspondences, accuracy metrics and experiment sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "tear/pipeline.hpp"

namespace tear::bench {

struct SyntheticConfig {
  std::size_t n = 1000;
  double outlier_ratio = 0.9;
  double sigma = 0.01;
  double tau = 1.67;
  std::uint64_t seed = 1;
  /// Rescale source points uniformly into [0,1]^3 before pairing.
  bool unit_cube = false;
  /// Threshold per pair; unset means 5.54 sigma.
  std::optional<double> xi;

  double threshold() const { return xi.value_or(5.54 * sigma); }
  void validate() const {
    if (n < 1) throw std::invalid_argument("synthetic: n must be at least 1");
    if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0))
      throw std::invalid_argument("synthetic: outlier ratio must be in [0, 1)");
    if (!(sigma >= 0.0) || !(tau > 0.0)) throw std::invalid_argument("synthetic: bad noise scale");
  }
};

struct GroundTruth {
  PoseEstimate pose;
  std::vector<bool> inlier_mask;
  std::size_t inlier_count() const { return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true)); }
};

struct Synthetic {
  PointPairSet pairs;
  GroundTruth gt;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed of trial k in a sweep cell.
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t trial) {
  return splitmix64(splitmix64(seed ^ (cell * 0x632be59bd9b4e019ull)) + trial);
}

/// Uniform rotation from a uniform unit quaternion (normalized Gaussian 4-vector).
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-6);
  return q.normalized().toRotationMatrix();
}

inline Synthetic generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  Synthetic s;
  s.gt.pose.R = random_rotation(rng);
  s.gt.pose.t = Eigen::Vector3d(unif(rng), unif(rng), unif(rng));

  std::vector<Eigen::Vector3d> x(cfg.n);
  for (auto& p : x) p = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
  if (cfg.unit_cube) {
    Eigen::Vector3d lo = x[0], hi = x[0];
    for (const auto& p : x) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double extent = std::max((hi - lo).maxCoeff(), 1e-300);
    for (auto& p : x) p = (p - lo) / extent;
  }

  const auto outliers = static_cast<std::size_t>(std::llround(cfg.outlier_ratio * static_cast<double>(cfg.n)));
  std::vector<std::size_t> order(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) order[i] = i;
  for (std::size_t i = cfg.n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  s.gt.inlier_mask.assign(cfg.n, true);
  for (std::size_t k = 0; k < outliers; ++k) s.gt.inlier_mask[order[k]] = false;

  const double xi = cfg.threshold();
  s.pairs.x.reserve(cfg.n);
  s.pairs.y.reserve(cfg.n);
  s.pairs.xi.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const Eigen::Vector3d noise(normal(rng), normal(rng), normal(rng));
    Eigen::Vector3d y = s.gt.pose.R * x[i] + s.gt.pose.t + cfg.sigma * noise;
    if (!s.gt.inlier_mask[i]) y = cfg.tau * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    s.pairs.push_back(x[i], y, xi);
  }
  return s;
}

/// Geodesic angle between two rotations in degrees.
inline double rotation_error(const Eigen::Matrix3d& R_est, const Eigen::Matrix3d& R_gt) {
  if (!is_rotation(R_est, 1e-6) || !is_rotation(R_gt, 1e-6))
    throw std::invalid_argument("rotation_error: input is not a rotation");
  const Eigen::Matrix3d M = R_gt.transpose() * R_est;
  const double c = 0.5 * (M.trace() - 1.0);
  const Eigen::Vector3d w(M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1));
  const double s = 0.5 * w.norm();
  return std::clamp(std::atan2(s, c) * 180.0 / kPi, 0.0, 180.0);
}

struct RecallThresholds {
  double deg = 15.0;
  double length = 0.30;
};

inline RecallThresholds preset(const std::string& name) {
  if (name == "3dmatch") return {15.0, 0.30};
  if (name == "kitti") return {5.0, 0.60};
  if (name == "eth") return {3.0, 0.50};
  throw std::invalid_argument("unknown recall preset '" + name + "' (expected 3dmatch, kitti or eth)");
}

/// F1 of a predicted index set against a mask; 0 when the prediction is empty.
inline double f1_score(const IndexSet& predicted, const std::vector<bool>& mask) {
  if (predicted.empty()) return 0.0;
  std::size_t tp = 0;
  for (std::size_t i : predicted) tp += (i < mask.size() && mask[i]) ? 1 : 0;
  const auto positives = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (tp == 0 || positives == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(predicted.size());
  const double r = static_cast<double>(tp) / static_cast<double>(positives);
  return 2.0 * p * r / (p + r);
}

struct Metrics {
  double re_deg = 0.0;
  double te = 0.0;
  double f1 = 0.0;
  double f1_stage2 = 0.0;
  double f1_stage1 = 0.0;
  bool recall_flag = false;
  double wall_time = 0.0;
  std::size_t peak_memory = 0;
};

inline Metrics evaluate(const RegistrationResult& r, const GroundTruth& gt, const RecallThresholds& th) {
  Metrics m;
  m.re_deg = rotation_error(r.pose.R, gt.pose.R);
  m.te = (r.pose.t - gt.pose.t).norm();
  m.f1 = f1_score(r.final_inliers, gt.inlier_mask);
  m.f1_stage2 = f1_score(r.stage2.inliers, gt.inlier_mask);
  m.f1_stage1 = f1_score(r.stage1.inliers, gt.inlier_mask);
  m.recall_flag = m.re_deg <= th.deg && m.te <= th.length;
  return m;
}

/// Process high-water mark of resident memory, in bytes (0 if unavailable).
inline std::size_t peak_memory_bytes() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream is(line.substr(6));
      std::size_t kb = 0;
      is >> kb;
      return kb * 1024;
    }
  }
  return 0;
}

struct Row {
  std::size_t n = 0;
  double ratio = 0.0;
  std::size_t trial = 0;
  FirstStageLoss loss = FirstStageLoss::tear;
  Metrics metrics;
  double stage1_time = 0.0;
  std::size_t stage1_inliers = 0;
  std::size_t final_inliers = 0;
  /// Empty on success; otherwise the failure message.
  std::string error;
};

struct SweepConfig {
  std::vector<std::size_t> n_values{1000};
  std::vector<double> ratios{0.9};
  std::size_t trials = 1;
  double sigma = 0.01;
  double tau = 1.67;
  std::uint64_t seed = 1;
  bool unit_cube = false;
  RecallThresholds thresholds{};
  SolverConfig solver{};
  /// Trials run concurrently on this many threads; each trial's solver uses one.
  unsigned threads = 1;
};

inline Row run_trial(const SweepConfig& sc, std::size_t cell, std::size_t n, double ratio, std::size_t trial) {
  Row row;
  row.n = n;
  row.ratio = ratio;
  row.trial = trial;
  row.loss = sc.solver.loss;
  SyntheticConfig g;
  g.n = n;
  g.outlier_ratio = ratio;
  g.sigma = sc.sigma;
  g.tau = sc.tau;
  g.seed = trial_seed(sc.seed, cell, trial);
  g.unit_cube = sc.unit_cube;
  try {
    const Synthetic s = generate_synthetic(g);
    const auto t0 = std::chrono::steady_clock::now();
    const RegistrationResult r = register_pairs(s.pairs, sc.solver);
    row.metrics = evaluate(r, s.gt, sc.thresholds);
    row.metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.stage1_time = r.stage1.report.wall_time;
    row.stage1_inliers = r.stage1.inliers.size();
    row.final_inliers = r.final_inliers.size();
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  row.metrics.peak_memory = peak_memory_bytes();
  return row;
}

/// Runs every (n, ratio) cell for the given number of trials. A failing trial
/// is recorded in its row and does not stop the sweep.
inline std::vector<Row> sweep(const SweepConfig& sc) {
  struct Job {
    std::size_t cell, n;
    double ratio;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  std::size_t cell = 0;
  for (std::size_t n : sc.n_values) {
    for (double ratio : sc.ratios) {
      for (std::size_t t = 0; t < sc.trials; ++t) jobs.push_back({cell, n, ratio, t});
      ++cell;
    }
  }
  std::vector<Row> rows(jobs.size());
  SweepConfig one = sc;
  one.solver.threads = sc.threads > 1 ? 1 : sc.solver.threads;
  bnb::WorkerPool pool(sc.threads);
  pool.parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& j = jobs[k];
    rows[k] = run_trial(one, j.cell, j.n, j.ratio, j.trial);
  });
  return rows;
}

template <class T>
double median(std::vector<T> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? static_cast<double>(v[m]) : 0.5 * (static_cast<double>(v[m - 1]) + static_cast<double>(v[m]));
}

}  // namespace tear::bench
