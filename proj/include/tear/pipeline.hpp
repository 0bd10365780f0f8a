#pragma once

// Two-stage registration: search the first row of R with its translation,
// then the second row under orthogonality, then refit the full pose by SVD.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tear/bnb.hpp"
#include "tear/errors.hpp"
#include "tear/geometry.hpp"
#include "tear/scalar_solvers.hpp"

namespace tear {

enum class FirstStageLoss { tear, cm, tls };

inline const char* to_string(FirstStageLoss l) {
  switch (l) {
    case FirstStageLoss::tear:
      return "tear";
    case FirstStageLoss::cm:
      return "cm";
    default:
      return "tls";
  }
}

inline FirstStageLoss parse_loss(const std::string& s) {
  if (s == "tear") return FirstStageLoss::tear;
  if (s == "cm") return FirstStageLoss::cm;
  if (s == "tls") return FirstStageLoss::tls;
  throw std::invalid_argument("unknown loss '" + s + "' (expected tear, cm or tls)");
}

/// A point of the search: direction angles plus the scalar translation.
struct AxisPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double t = 0.0;
};

using StageReport = bnb::Report<AxisPoint>;

struct SolverConfig {
  FirstStageLoss loss = FirstStageLoss::tear;
  /// Absolute optimality gap; unset means 1e-6 times the truncation cap.
  std::optional<double> epsilon;
  double min_resolution = 1e-3;
  std::size_t max_nodes = 50'000'000;
  unsigned threads = 1;
  /// Refits on the final-residual inlier set after the SVD on the second-stage set.
  int refine_iterations = 5;
  /// Rotates the second stage so the first row becomes the z axis.
  bool align_stage2 = true;
  /// Shifts x to its centroid inside each stage; the optimum is unchanged.
  bool center = true;
};

struct StageSolution {
  UnitVector3 r;
  double t = 0.0;
  /// Objective value; for consensus this is the inlier count.
  double value = 0.0;
  IndexSet inliers;
  StageReport report;
  /// Gap tolerance the search ran with.
  double epsilon = 0.0;
};

struct RegistrationResult {
  PoseEstimate pose;
  StageSolution stage1;
  StageSolution stage2;
  IndexSet final_inliers;
  int refits = 0;
};

namespace detail {

/// Structure-of-arrays copy of one scalar component of the pairs.
struct AxisData {
  std::vector<double> x1, x2, x3, rho, y, xi;
  bool uniform = true;
  double shared = 0.0;
  double cap = 0.0;
  double cap_sq = 0.0;

  std::size_t size() const { return y.size(); }
  Thresholds thresholds() const { return uniform ? Thresholds::same(shared) : Thresholds::each(xi); }

  void finish() {
    rho.resize(size());
    for (std::size_t i = 0; i < size(); ++i) rho[i] = std::sqrt(x1[i] * x1[i] + x2[i] * x2[i]);
    uniform = !xi.empty() && std::all_of(xi.begin(), xi.end(), [&](double v) { return v == xi.front(); });
    shared = xi.empty() ? 0.0 : xi.front();
    cap = 0.0;
    cap_sq = 0.0;
    for (double v : xi) {
      cap += v;
      cap_sq += v * v;
    }
  }
};

struct BoundScratch {
  std::vector<double> a, bl, bu, lo, hi, xi;
};

inline BoundScratch& bound_scratch() {
  thread_local BoundScratch s;
  return s;
}

// Hull of {t : value(t) < threshold} for the truncated-abs sweep. Segments
// between events are linear, so a segment is kept when either end is below.
struct BelowHull {
  double threshold;
  double prev = -std::numeric_limits<double>::infinity();
  bool prev_below = false;
  bool started = false;
  ScalarInterval hull{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  void operator()(ScanEvent, double key, double value) {
    const bool below = value < threshold;
    if (below || prev_below) {
      hull.lo = std::min(hull.lo, started ? prev : key);
      hull.hi = std::max(hull.hi, key);
    }
    prev = key;
    prev_below = below;
    started = true;
  }
};

// Same for consensus: depth above need on the segment after an endpoint.
struct DeepHull {
  double need;
  ScalarInterval hull{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  void operator()(double key, std::size_t before, std::size_t after) {
    if (static_cast<double>(after) > need) hull.lo = std::min(hull.lo, key);
    if (static_cast<double>(before) > need) hull.hi = std::max(hull.hi, key);
  }
};

}  // namespace detail

/// Pairs still able to matter below a node, plus the fixed cost of the rest.
/// Each dropped pair costs its full truncation cap wherever the objective can
/// still beat the incumbent.
struct ActiveSet {
  std::vector<std::uint32_t> idx;
  double dropped = 0.0;
};

/// Bounds for the first stage (or a frame-aligned second stage) over angle boxes.
/// The optional ActiveSet restricts evaluation to its pairs (null means all).
template <FirstStageLoss Loss>
class AxisBounder {
 public:
  /// Whether lower() reports a t-hull and filter() may shrink the pair set.
  static constexpr bool kReducible = Loss != FirstStageLoss::tls;

  explicit AxisBounder(detail::AxisData data) : d_(std::move(data)) {
    if (d_.size() == 0) throw std::invalid_argument("bounder: no pairs");
    if (d_.size() > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("bounder: too many pairs");
  }
  const detail::AxisData& data() const { return d_; }

  /// Scale of the objective, used for the default gap.
  double scale() const {
    if constexpr (Loss == FirstStageLoss::tear) return d_.cap;
    if constexpr (Loss == FirstStageLoss::tls) return d_.cap_sq;
    return static_cast<double>(d_.size());
  }

  /// Exact objective over t at direction r (over the active pairs plus their fixed cost).
  ScalarSolution at_direction(const Eigen::Vector3d& r, const ActiveSet* act = nullptr) const {
    if (act && act->idx.empty()) return {0.0, act->dropped};
    auto& s = detail::bound_scratch();
    const std::size_t n = count(act);
    s.a.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = index(act, k);
      s.a[k] = d_.y[i] - (r.x() * d_.x1[i] + r.y() * d_.x2[i] + r.z() * d_.x3[i]);
    }
    const Thresholds th = thresholds(act, s);
    ScalarSolution out;
    if constexpr (Loss == FirstStageLoss::tear) {
      out = solve_trunc_abs_point(s.a, th);
    } else if constexpr (Loss == FirstStageLoss::tls) {
      out = solve_trunc_sq_point(s.a, th);
    } else {
      s.lo.resize(n);
      s.hi.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        s.lo[k] = s.a[k] - th[k];
        s.hi[k] = s.a[k] + th[k];
      }
      const StabResult st = interval_stab(s.lo, s.hi);
      out = {st.stabber, static_cast<double>(n - st.count)};
    }
    if (act) out.value += act->dropped;
    return out;
  }

  /// Upper bound: exact objective at the box center.
  ScalarSolution upper(const AngleBox& box, double beta_center, const ActiveSet* act = nullptr) const {
    return at_direction(angles_to_unit(box.alpha.center(), beta_center), act);
  }
  ScalarSolution upper(const AngleBox& box) const { return upper(box, box.beta.center()); }

  /// Lower bound: relaxation to offset intervals over the box. With a hull
  /// output, also reports a range containing every t where the relaxation
  /// is below the incumbent.
  ScalarSolution lower(const AngleBox& box, const ActiveSet* act = nullptr,
                       double incumbent = std::numeric_limits<double>::infinity(),
                       ScalarInterval* hull = nullptr) const {
    if (act && act->idx.empty()) {
      if (hull) *hull = {1.0, 0.0};
      return {0.0, act->dropped};
    }
    auto& s = detail::bound_scratch();
    const std::size_t n = count(act);
    s.bl.resize(n);
    s.bu.resize(n);
    const OffsetRangeKernel kern(box);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = index(act, k);
      const ScalarInterval b = kern(d_.x1[i], d_.x2[i], d_.x3[i], d_.rho[i], d_.y[i]);
      s.bl[k] = b.lo;
      s.bu[k] = b.hi;
    }
    const Thresholds th = thresholds(act, s);
    const double dropped = act ? act->dropped : 0.0;
    ScalarSolution out;
    if constexpr (Loss == FirstStageLoss::tear) {
      const double cap = th.total(n);
      detail::BelowHull vis{incumbent - dropped};
      if (th.uniform) {
        sort_values(s.bl);
        sort_values(s.bu);
        out = scan_trunc_abs_interval(s.bl, -th.shared, s.bl, s.bu, s.bu, th.shared, cap, vis);
      } else {
        s.lo.resize(n);
        s.hi.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
          s.lo[k] = s.bl[k] - th[k];
          s.hi[k] = s.bu[k] + th[k];
        }
        sort_values(s.lo);
        sort_values(s.bl);
        sort_values(s.bu);
        sort_values(s.hi);
        out = scan_trunc_abs_interval(s.lo, 0.0, s.bl, s.bu, s.hi, 0.0, cap, vis);
      }
      if (hull) *hull = vis.hull;
    } else if constexpr (Loss == FirstStageLoss::tls) {
      out = solve_trunc_sq_interval(s.bl, s.bu, th);
      if (hull) *hull = {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    } else {
      for (std::size_t k = 0; k < n; ++k) {
        s.bl[k] -= th[k];
        s.bu[k] += th[k];
      }
      sort_values(s.bl);
      sort_values(s.bu);
      detail::DeepHull vis{static_cast<double>(n) + dropped - incumbent};
      const StabResult st = scan_stab(s.bl, 0.0, s.bu, 0.0, vis);
      out = {st.stabber, static_cast<double>(n - st.count)};
      if (hull) *hull = vis.hull;
    }
    out.value += dropped;
    return out;
  }

  /// Pairs of act whose box offset interval, widened by the threshold, meets
  /// the hull. Returns act itself when the reduction would be small.
  std::shared_ptr<const ActiveSet> filter(const AngleBox& box, const std::shared_ptr<const ActiveSet>& act,
                                          const ScalarInterval& hull) const {
    if constexpr (!kReducible) {
      return act;
    } else {
      const std::size_t n = count(act.get());
      auto out = std::make_shared<ActiveSet>();
      out->dropped = act ? act->dropped : 0.0;
      const OffsetRangeKernel kern(box);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = index(act.get(), k);
        const ScalarInterval b = kern(d_.x1[i], d_.x2[i], d_.x3[i], d_.rho[i], d_.y[i]);
        if (b.lo - d_.xi[i] <= hull.hi && b.hi + d_.xi[i] >= hull.lo) {
          out->idx.push_back(static_cast<std::uint32_t>(i));
        } else {
          out->dropped += Loss == FirstStageLoss::tear ? d_.xi[i] : 1.0;
        }
      }
      if (out->idx.size() * 10 > n * 9) return act;
      out->idx.shrink_to_fit();
      return out;
    }
  }

 private:
  std::size_t count(const ActiveSet* act) const { return act ? act->idx.size() : d_.size(); }
  static std::size_t index(const ActiveSet* act, std::size_t k) { return act ? act->idx[k] : k; }
  Thresholds thresholds(const ActiveSet* act, detail::BoundScratch& s) const {
    if (d_.uniform || !act) return d_.thresholds();
    s.xi.resize(act->idx.size());
    for (std::size_t k = 0; k < act->idx.size(); ++k) s.xi[k] = d_.xi[act->idx[k]];
    return Thresholds::each(s.xi);
  }

  detail::AxisData d_;
};

namespace detail {

inline Eigen::Vector3d centroid(const PointPairSet& pairs, const IndexSet* subset) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  const std::size_t n = subset ? subset->size() : pairs.size();
  if (n == 0) return c;
  for (std::size_t k = 0; k < n; ++k) c += pairs.x[subset ? (*subset)[k] : k];
  return c / static_cast<double>(n);
}

/// Pairs (Q (x - c), y[comp], xi) for the listed indices (all when subset is null).
inline AxisData make_axis_data(const PointPairSet& pairs, int comp, const IndexSet* subset,
                               std::span<const double> xi, const Eigen::Vector3d& c,
                               const Eigen::Matrix3d& Q) {
  AxisData d;
  const std::size_t n = subset ? subset->size() : pairs.size();
  d.x1.resize(n);
  d.x2.resize(n);
  d.x3.resize(n);
  d.y.resize(n);
  d.xi.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = subset ? (*subset)[k] : k;
    const Eigen::Vector3d x = Q * (pairs.x[i] - c);
    d.x1[k] = x.x();
    d.x2[k] = x.y();
    d.x3[k] = x.z();
    d.y[k] = pairs.y[i][comp];
    d.xi[k] = xi[k];
  }
  d.finish();
  return d;
}

inline double default_epsilon(double scale) { return std::max(1e-6 * scale, 1e-12); }

inline std::unique_ptr<bnb::WorkerPool> make_pool(unsigned threads) {
  if (threads <= 1) return nullptr;
  return std::make_unique<bnb::WorkerPool>(threads);
}

/// First-stage branch: the box, the pairs inherited from its parent, and the
/// t-hull its own lower bound reported (filled when it is bounded).
struct SearchNode {
  AngleBox box;
  std::shared_ptr<const ActiveSet> active;
  mutable ScalarInterval hull{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};

  bool narrower_than(double w) const { return box.narrower_than(w); }
};

template <FirstStageLoss Loss>
StageReport run_first_stage(const AxisBounder<Loss>& b, const SolverConfig& cfg, bnb::Trace* trace) {
  bnb::Config bc;
  bc.epsilon = cfg.epsilon.value_or(default_epsilon(b.scale()));
  bc.min_resolution = cfg.min_resolution;
  bc.max_nodes = cfg.max_nodes;
  auto pool = make_pool(cfg.threads);
  auto upper = [&](const SearchNode& n) {
    const ScalarSolution s = b.upper(n.box, n.box.beta.center(), n.active.get());
    return bnb::Evaluation<AxisPoint>{s.value, {n.box.alpha.center(), n.box.beta.center(), s.argmin}};
  };
  auto lower = [&](const SearchNode& n, double incumbent) {
    return b.lower(n.box, n.active.get(), incumbent, &n.hull).value;
  };
  auto split = [&](const SearchNode& n) {
    const auto act = b.filter(n.box, n.active, n.hull);
    const auto q = n.box.quadrants();
    std::array<SearchNode, 4> out;
    for (std::size_t k = 0; k < 4; ++k) out[k] = SearchNode{q[k], act};
    return out;
  };
  StageReport rep = bnb::run(upper, lower, split, SearchNode{AngleBox::full(), nullptr}, bc, pool.get(), trace);
  // Incumbents evaluated on a reduced pair set may overstate the objective
  // away from the hull; re-solve t exactly at the chosen direction.
  const ScalarSolution exact = b.at_direction(angles_to_unit(rep.best_point.alpha, rep.best_point.beta));
  if (exact.value <= rep.best_value) {
    rep.best_value = exact.value;
    rep.best_point.t = exact.argmin;
  }
  rep.lower_bound = std::min(rep.lower_bound, rep.best_value);
  rep.gap = rep.best_value - rep.lower_bound;
  return rep;
}

inline double stage1_residual(const PointPairSet& pairs, std::size_t i, const Eigen::Vector3d& r, double t) {
  return pairs.y[i].x() - r.dot(pairs.x[i]) - t;
}

}  // namespace detail

/// First-stage bounder over all pairs, x optionally centered.
template <FirstStageLoss Loss>
AxisBounder<Loss> make_first_stage_bounder(const PointPairSet& pairs, bool center, Eigen::Vector3d* c_out = nullptr) {
  const Eigen::Vector3d c = center ? detail::centroid(pairs, nullptr) : Eigen::Vector3d::Zero();
  if (c_out) *c_out = c;
  return AxisBounder<Loss>(
      detail::make_axis_data(pairs, 0, nullptr, pairs.xi, c, Eigen::Matrix3d::Identity()));
}

/// Center evaluation of the first-stage TEAR objective on the raw pairs.
inline ScalarSolution tear1_upper(const PointPairSet& pairs, const AngleBox& box) {
  return make_first_stage_bounder<FirstStageLoss::tear>(pairs, false).upper(box);
}
inline ScalarSolution tear1_lower(const PointPairSet& pairs, const AngleBox& box) {
  return make_first_stage_bounder<FirstStageLoss::tear>(pairs, false).lower(box);
}

template <FirstStageLoss Loss>
StageSolution solve_first_stage(const PointPairSet& pairs, const SolverConfig& cfg, bnb::Trace* trace = nullptr) {
  pairs.validate();
  if (pairs.size() == 0) throw std::invalid_argument("first stage: no pairs");
  Eigen::Vector3d c;
  const auto b = make_first_stage_bounder<Loss>(pairs, cfg.center, &c);
  StageSolution s;
  s.report = detail::run_first_stage(b, cfg, trace);
  s.epsilon = cfg.epsilon.value_or(detail::default_epsilon(b.scale()));
  AxisPoint& p = s.report.best_point;
  s.r = UnitVector3(angles_to_unit(p.alpha, p.beta));
  if constexpr (Loss == FirstStageLoss::cm) {
    // The stabber is a left endpoint; move to the middle of the common
    // part of the intervals it stabs so the inlier test is not on a boundary.
    const auto& d = b.data();
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double a = d.y[i] - s.r.vec().dot(Eigen::Vector3d(d.x1[i], d.x2[i], d.x3[i]));
      if (std::abs(a - p.t) <= d.xi[i]) {
        lo = std::max(lo, a - d.xi[i]);
        hi = std::min(hi, a + d.xi[i]);
      }
    }
    if (lo <= hi) p.t = 0.5 * (lo + hi);
  }
  s.t = p.t - s.r.dot(c);
  s.value = Loss == FirstStageLoss::cm ? static_cast<double>(pairs.size()) - s.report.best_value
                                       : s.report.best_value;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (std::abs(detail::stage1_residual(pairs, i, s.r.vec(), s.t)) <= pairs.xi[i]) s.inliers.push_back(i);
  return s;
}

inline StageSolution solve_tear1(const PointPairSet& pairs, const SolverConfig& cfg, bnb::Trace* trace = nullptr) {
  return solve_first_stage<FirstStageLoss::tear>(pairs, cfg, trace);
}
/// Consensus maximization; value is the consensus count.
inline StageSolution solve_cm1(const PointPairSet& pairs, const SolverConfig& cfg, bnb::Trace* trace = nullptr) {
  return solve_first_stage<FirstStageLoss::cm>(pairs, cfg, trace);
}
inline StageSolution solve_tls1(const PointPairSet& pairs, const SolverConfig& cfg, bnb::Trace* trace = nullptr) {
  return solve_first_stage<FirstStageLoss::tls>(pairs, cfg, trace);
}

/// xi_i2 = max(0, xi_i - |stage-1 residual|) for each member of the stage-1 inlier set.
inline std::vector<double> derive_stage2_thresholds(const PointPairSet& pairs, const StageSolution& stage1) {
  std::vector<double> out;
  out.reserve(stage1.inliers.size());
  for (std::size_t i : stage1.inliers)
    out.push_back(std::max(0.0, pairs.xi[i] - std::abs(detail::stage1_residual(pairs, i, stage1.r.vec(), stage1.t))));
  return out;
}

/// The beta in [0, pi] at which (alpha, beta) is orthogonal to r1:
/// sin(beta) g + r13 cos(beta) = 0 with g = r11 cos(alpha) + r12 sin(alpha),
/// so (sin, cos)(beta) is proportional to (|r13|, -sign(r13) g). For r13 = 0
/// both poles solve it when g != 0; the north pole is returned for g <= 0 and
/// the south pole for g > 0, and beta_of_alpha_range then covers [0, pi].
inline double beta_of_alpha(const UnitVector3& r1, double alpha) {
  const double g = r1[0] * std::cos(alpha) + r1[1] * std::sin(alpha);
  const double r13 = r1[2];
  if (r13 == 0.0) return g > 0.0 ? kPi : 0.0;
  return std::atan2(std::abs(r13), r13 > 0.0 ? -g : g);
}

/// Range of beta_of_alpha over the interval, through the range of g (beta is
/// monotone in g), padded by 1e-12.
inline ScalarInterval beta_of_alpha_range(const UnitVector3& r1, const AlphaInterval& iv) {
  const double r13 = r1[2];
  if (r13 == 0.0) return {0.0, kPi};
  const double rho = std::sqrt(r1[0] * r1[0] + r1[1] * r1[1]);
  const OffsetRangeKernel k(AngleBox{iv.alpha, {0.0, 0.0}});
  const ScalarInterval g = k.alpha_range(r1[0], r1[1], rho);
  const double b1 = std::atan2(std::abs(r13), r13 > 0.0 ? -g.lo : g.lo);
  const double b2 = std::atan2(std::abs(r13), r13 > 0.0 ? -g.hi : g.hi);
  return {std::max(0.0, std::min(b1, b2) - 1e-12), std::min(kPi, std::max(b1, b2) + 1e-12)};
}

/// Second-stage bounds over alpha intervals; the search direction is kept
/// orthogonal to r1 by deriving beta from alpha.
class Stage2Bounder {
 public:
  Stage2Bounder(detail::AxisData data, const UnitVector3& r1) : inner_(std::move(data)), r1_(r1) {}

  double scale() const { return inner_.scale(); }
  const UnitVector3& r1() const { return r1_; }

  AngleBox box(const AlphaInterval& iv) const { return {iv.alpha, beta_of_alpha_range(r1_, iv)}; }
  ScalarSolution upper(const AlphaInterval& iv, double* beta_out = nullptr) const {
    const double beta = beta_of_alpha(r1_, iv.center());
    if (beta_out) *beta_out = beta;
    return inner_.at_direction(angles_to_unit(iv.center(), beta));
  }
  ScalarSolution lower(const AlphaInterval& iv) const { return inner_.lower(box(iv)); }

 private:
  AxisBounder<FirstStageLoss::tear> inner_;
  UnitVector3 r1_;
};

/// Builds the second-stage bounder over stage1.inliers. When aligned, x is
/// rotated by Q (Q r1 = e_z) so the orthogonal directions form the equator.
inline Stage2Bounder make_stage2_bounder(const PointPairSet& pairs, const IndexSet& inliers, const UnitVector3& r1,
                                         std::span<const double> xi2, const SolverConfig& cfg,
                                         Eigen::Matrix3d* Q_out = nullptr, Eigen::Vector3d* c_out = nullptr) {
  const Eigen::Vector3d c = cfg.center ? detail::centroid(pairs, &inliers) : Eigen::Vector3d::Zero();
  const Eigen::Matrix3d Q = cfg.align_stage2 ? frame_with_third_axis(r1.vec()) : Eigen::Matrix3d::Identity();
  if (Q_out) *Q_out = Q;
  if (c_out) *c_out = c;
  const UnitVector3 r1_local = cfg.align_stage2 ? UnitVector3(Eigen::Vector3d::UnitZ()) : r1;
  return Stage2Bounder(detail::make_axis_data(pairs, 1, &inliers, xi2, c, Q), r1_local);
}

inline StageSolution solve_tear2(const PointPairSet& pairs, const IndexSet& inliers, const UnitVector3& r1,
                                 std::span<const double> xi2, const SolverConfig& cfg,
                                 bnb::Trace* trace = nullptr) {
  if (inliers.empty()) throw RegistrationFailure("registration failed at stage 1: empty inlier set");
  if (xi2.size() != inliers.size()) throw std::invalid_argument("solve_tear2: threshold count mismatch");
  Eigen::Matrix3d Q;
  Eigen::Vector3d c;
  const Stage2Bounder b = make_stage2_bounder(pairs, inliers, r1, xi2, cfg, &Q, &c);

  bnb::Config bc;
  bc.epsilon = cfg.epsilon.value_or(detail::default_epsilon(b.scale()));
  bc.min_resolution = cfg.min_resolution;
  bc.max_nodes = cfg.max_nodes;
  auto pool = detail::make_pool(cfg.threads);
  auto upper = [&](const AlphaInterval& iv) {
    double beta;
    const ScalarSolution s = b.upper(iv, &beta);
    return bnb::Evaluation<AxisPoint>{s.value, {iv.center(), beta, s.argmin}};
  };
  auto lower = [&](const AlphaInterval& iv) { return b.lower(iv).value; };
  auto split = [](const AlphaInterval& iv) { return iv.halves(); };

  StageSolution s;
  s.report = bnb::run(upper, lower, split, AlphaInterval::full(), bc, pool.get(), trace);
  s.epsilon = bc.epsilon;
  const AxisPoint& p = s.report.best_point;
  const Eigen::Vector3d r_local = angles_to_unit(p.alpha, p.beta);
  Eigen::Vector3d r = Q.transpose() * r_local;
  // Remove the rounding-level component along r1 and renormalize.
  r = (r - r.dot(r1.vec()) * r1.vec()).normalized();
  s.r = UnitVector3(r);
  s.t = p.t - r.dot(c);
  s.value = s.report.best_value;
  for (std::size_t k = 0; k < inliers.size(); ++k) {
    const std::size_t i = inliers[k];
    if (std::abs(pairs.y[i].y() - r.dot(pairs.x[i]) - s.t) <= xi2[k]) s.inliers.push_back(i);
  }
  return s;
}

inline IndexSet final_inliers(const PointPairSet& pairs, const PoseEstimate& pose) {
  IndexSet out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if ((pairs.y[i] - pose.R * pairs.x[i] - pose.t).norm() <= pairs.xi[i]) out.push_back(i);
  return out;
}

inline StageSolution solve_stage1(const PointPairSet& pairs, const SolverConfig& cfg) {
  switch (cfg.loss) {
    case FirstStageLoss::tear:
      return solve_tear1(pairs, cfg);
    case FirstStageLoss::cm:
      return solve_cm1(pairs, cfg);
    default:
      return solve_tls1(pairs, cfg);
  }
}

/// Full pipeline. Throws RegistrationFailure when stage 1 keeps nothing and
/// InsufficientInliers when stage 2 keeps fewer than three pairs.
inline RegistrationResult register_pairs(const PointPairSet& pairs, const SolverConfig& cfg = {}) {
  pairs.validate();
  if (pairs.size() < 3) throw std::invalid_argument("register: need at least 3 pairs");
  RegistrationResult res;
  res.stage1 = solve_stage1(pairs, cfg);
  if (res.stage1.inliers.empty()) throw RegistrationFailure("registration failed at stage 1: empty inlier set");
  const std::vector<double> xi2 = derive_stage2_thresholds(pairs, res.stage1);
  res.stage2 = solve_tear2(pairs, res.stage1.inliers, res.stage1.r, xi2, cfg);
  if (res.stage2.inliers.size() < 3)
    throw InsufficientInliers("stage 2 kept fewer than 3 pairs", res.stage2.inliers.size());
  res.pose = procrustes(pairs, res.stage2.inliers);
  res.final_inliers = final_inliers(pairs, res.pose);
  for (int k = 0; k < cfg.refine_iterations && res.final_inliers.size() >= 3; ++k) {
    PoseEstimate next;
    try {
      next = procrustes(pairs, res.final_inliers);
    } catch (const DegenerateConfiguration&) {
      break;
    }
    IndexSet next_inliers = final_inliers(pairs, next);
    if (next_inliers.size() < 3) break;
    res.pose = next;
    ++res.refits;
    const bool stable = next_inliers == res.final_inliers;
    res.final_inliers = std::move(next_inliers);
    if (stable) break;
  }
  return res;
}

}  // namespace tear
