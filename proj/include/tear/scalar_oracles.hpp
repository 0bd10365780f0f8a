#pragma once

// Brute-force references for the sweeps in scalar_solvers.hpp. They evaluate
// the objective directly at every candidate location and share no code with
// the sweeps. Quadratic in N; refuse inputs above max_n.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "tear/scalar_solvers.hpp"

namespace tear::oracle {

inline constexpr std::size_t kDefaultMaxN = 10000;

inline double trunc_abs_point_objective(const TruncAbsPointInstance& inst, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.a.size(); ++i) s += std::min(std::abs(inst.a[i] - t), inst.xi[i]);
  return s;
}

inline double interval_distance(const ScalarInterval& b, double t) {
  if (t < b.lo) return b.lo - t;
  if (t > b.hi) return t - b.hi;
  return 0.0;
}

inline double trunc_abs_interval_objective(const TruncAbsIntervalInstance& inst, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.b.size(); ++i) s += std::min(interval_distance(inst.b[i], t), inst.xi[i]);
  return s;
}

inline double trunc_sq_point_objective(const TruncAbsPointInstance& inst, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.a.size(); ++i) {
    const double d = inst.a[i] - t;
    s += std::min(d * d, inst.xi[i] * inst.xi[i]);
  }
  return s;
}

inline double trunc_sq_interval_objective(const TruncAbsIntervalInstance& inst, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < inst.b.size(); ++i) {
    const double d = interval_distance(inst.b[i], t);
    s += std::min(d * d, inst.xi[i] * inst.xi[i]);
  }
  return s;
}

inline std::size_t stab_depth(const StabSet& set, double t) {
  std::size_t c = 0;
  for (const auto& iv : set.intervals) c += iv.contains(t) ? 1 : 0;
  return c;
}

namespace detail {

inline void check_size(std::size_t n, std::size_t max_n) {
  if (n > max_n) throw std::invalid_argument("oracle: instance larger than max_n");
}

template <class F>
ScalarSolution best_of(const std::vector<double>& candidates, F&& objective) {
  ScalarSolution best{0.0, std::numeric_limits<double>::infinity()};
  for (double t : candidates) {
    const double v = objective(t);
    if (v < best.value) best = {t, v};
  }
  if (candidates.empty()) best = {0.0, 0.0};
  return best;
}

}  // namespace detail

inline ScalarSolution oracle_trunc_abs_point(const TruncAbsPointInstance& inst,
                                             std::size_t max_n = kDefaultMaxN) {
  detail::check_size(inst.a.size(), max_n);
  std::vector<double> cand;
  for (std::size_t i = 0; i < inst.a.size(); ++i) {
    cand.push_back(inst.a[i]);
    cand.push_back(inst.a[i] - inst.xi[i]);
    cand.push_back(inst.a[i] + inst.xi[i]);
  }
  return detail::best_of(cand, [&](double t) { return trunc_abs_point_objective(inst, t); });
}

inline ScalarSolution oracle_trunc_abs_interval(const TruncAbsIntervalInstance& inst,
                                                std::size_t max_n = kDefaultMaxN) {
  detail::check_size(inst.b.size(), max_n);
  std::vector<double> cand;
  for (std::size_t i = 0; i < inst.b.size(); ++i) {
    cand.push_back(inst.b[i].lo);
    cand.push_back(inst.b[i].hi);
    cand.push_back(inst.b[i].lo - inst.xi[i]);
    cand.push_back(inst.b[i].hi + inst.xi[i]);
  }
  return detail::best_of(cand, [&](double t) { return trunc_abs_interval_objective(inst, t); });
}

/// Squared variants: on every segment between sorted breakpoints, find the
/// uncapped terms by testing the segment midpoint, clamp their mean into the
/// segment and evaluate the full objective there.
inline ScalarSolution oracle_trunc_sq_point(const TruncAbsPointInstance& inst,
                                            std::size_t max_n = kDefaultMaxN) {
  detail::check_size(inst.a.size(), max_n);
  std::vector<double> bp;
  for (std::size_t i = 0; i < inst.a.size(); ++i) {
    bp.push_back(inst.a[i] - inst.xi[i]);
    bp.push_back(inst.a[i] + inst.xi[i]);
    bp.push_back(inst.a[i]);
  }
  std::sort(bp.begin(), bp.end());
  std::vector<double> cand = bp;
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    const double mid = 0.5 * (bp[k] + bp[k + 1]);
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < inst.a.size(); ++i) {
      if (std::abs(inst.a[i] - mid) < inst.xi[i]) {
        sum += inst.a[i];
        ++count;
      }
    }
    if (count > 0) cand.push_back(std::clamp(sum / count, bp[k], bp[k + 1]));
  }
  return detail::best_of(cand, [&](double t) { return trunc_sq_point_objective(inst, t); });
}

inline ScalarSolution oracle_trunc_sq_interval(const TruncAbsIntervalInstance& inst,
                                               std::size_t max_n = kDefaultMaxN) {
  detail::check_size(inst.b.size(), max_n);
  std::vector<double> bp;
  for (std::size_t i = 0; i < inst.b.size(); ++i) {
    bp.push_back(inst.b[i].lo - inst.xi[i]);
    bp.push_back(inst.b[i].lo);
    bp.push_back(inst.b[i].hi);
    bp.push_back(inst.b[i].hi + inst.xi[i]);
  }
  std::sort(bp.begin(), bp.end());
  std::vector<double> cand = bp;
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    const double mid = 0.5 * (bp[k] + bp[k + 1]);
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < inst.b.size(); ++i) {
      const auto& b = inst.b[i];
      if (mid < b.lo && b.lo - mid < inst.xi[i]) {
        sum += b.lo;
        ++count;
      } else if (mid > b.hi && mid - b.hi < inst.xi[i]) {
        sum += b.hi;
        ++count;
      }
    }
    if (count > 0) cand.push_back(std::clamp(sum / count, bp[k], bp[k + 1]));
  }
  return detail::best_of(cand, [&](double t) { return trunc_sq_interval_objective(inst, t); });
}

inline StabResult oracle_interval_stab(const StabSet& set, std::size_t max_n = kDefaultMaxN) {
  detail::check_size(set.intervals.size(), max_n);
  StabResult best;
  for (const auto& iv : set.intervals) {
    const std::size_t c = stab_depth(set, iv.lo);
    if (c > best.count) best = {iv.lo, c};
  }
  return best;
}

}  // namespace tear::oracle
