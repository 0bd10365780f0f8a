#pragma once

// One-dimensional truncated-loss minimizers and interval stabbing.
//
// All sweeps share one shape: breakpoints are visited in ascending order and
// the objective is carried along by its slope between breakpoints. Equal keys
// are visited in the order left breakpoint, anchor, right breakpoint.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "tear/geometry.hpp"

namespace tear {

struct TruncAbsPointInstance {
  std::vector<double> a;
  std::vector<double> xi;
};

struct TruncAbsIntervalInstance {
  std::vector<ScalarInterval> b;
  std::vector<double> xi;
};

struct StabSet {
  std::vector<ScalarInterval> intervals;
};

struct ScalarSolution {
  double argmin = 0.0;
  double value = 0.0;
};

struct StabResult {
  double stabber = 0.0;
  std::size_t count = 0;
};

/// Per-pair thresholds, or one shared threshold (which skips two sorts).
struct Thresholds {
  std::span<const double> per_pair{};
  double shared = 0.0;
  bool uniform = true;

  static Thresholds same(double xi) { return {{}, xi, true}; }
  static Thresholds each(std::span<const double> xi) { return {xi, 0.0, false}; }
  double operator[](std::size_t i) const { return uniform ? shared : per_pair[i]; }
  double total(std::size_t n) const {
    if (uniform) return shared * static_cast<double>(n);
    double s = 0.0;
    for (double v : per_pair) s += v;
    return s;
  }
  double total_sq(std::size_t n) const {
    if (uniform) return shared * shared * static_cast<double>(n);
    double s = 0.0;
    for (double v : per_pair) s += v * v;
    return s;
  }
};

enum class ScanEvent : std::uint8_t { left, anchor_lo, anchor_hi, right };

namespace detail {

inline std::uint64_t order_key(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof u);
  return (u & 0x8000000000000000ull) ? ~u : (u | 0x8000000000000000ull);
}

inline double from_order_key(std::uint64_t u) {
  u = (u & 0x8000000000000000ull) ? (u & 0x7fffffffffffffffull) : ~u;
  double v;
  std::memcpy(&v, &u, sizeof v);
  return v;
}

/// LSD radix sort on the order-preserving bit pattern, 11 bits per pass.
inline void radix_sort(std::vector<double>& v) {
  constexpr int kBits = 11, kPasses = 6;
  constexpr std::size_t kBins = std::size_t{1} << kBits;
  constexpr std::uint64_t kMask = kBins - 1;
  const std::size_t n = v.size();
  thread_local std::vector<std::uint64_t> a, b;
  thread_local std::vector<std::uint32_t> hist;
  a.resize(n);
  b.resize(n);
  hist.assign(kPasses * kBins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t k = order_key(v[i]);
    a[i] = k;
    for (int p = 0; p < kPasses; ++p) ++hist[p * kBins + ((k >> (kBits * p)) & kMask)];
  }
  for (int pass = 0; pass < kPasses; ++pass) {
    std::uint32_t* h = hist.data() + pass * kBins;
    const int shift = kBits * pass;
    if (h[(a[0] >> shift) & kMask] == n) continue;  // every key shares this digit
    std::uint32_t sum = 0;
    for (std::size_t d = 0; d < kBins; ++d) {
      const std::uint32_t c = h[d];
      h[d] = sum;
      sum += c;
    }
    for (std::size_t i = 0; i < n; ++i) b[h[(a[i] >> shift) & kMask]++] = a[i];
    a.swap(b);
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = from_order_key(a[i]);
}

}  // namespace detail

/// Ascending sort; radix for large inputs.
inline void sort_values(std::vector<double>& v) {
  if (v.size() < 512) {
    std::sort(v.begin(), v.end());
  } else {
    detail::radix_sort(v);
  }
}

namespace detail {

// Sorted values plus a constant shift applied on read.
struct Stream {
  const double* data = nullptr;
  std::size_t n = 0;
  double shift = 0.0;
  std::size_t i = 0;
  double head() const { return i < n ? data[i] + shift : std::numeric_limits<double>::infinity(); }
  double advance() {
    ++i;
    return head();
  }
};

struct NoVisit {
  void operator()(ScanEvent, double, double) const {}
  void operator()(double, std::size_t, std::size_t) const {}
};

}  // namespace detail

/// Sweep for min_t sum_i min{|a_i - t|, xi_i} over pre-sorted breakpoint lists.
/// lo = sorted {a_i - xi_i}, anchors = sorted {a_i}, hi = sorted {a_i + xi_i};
/// shifts let a shared threshold reuse the anchor array.
template <class Visit = detail::NoVisit>
ScalarSolution scan_trunc_abs_point(std::span<const double> lo, double lo_shift,
                                    std::span<const double> anchors,
                                    std::span<const double> hi, double hi_shift, double cap_total,
                                    Visit&& visit = {}) {
  detail::Stream s[3] = {{lo.data(), lo.size(), lo_shift},
                         {anchors.data(), anchors.size(), 0.0},
                         {hi.data(), hi.size(), hi_shift}};
  ScalarSolution best{0.0, std::numeric_limits<double>::infinity()};
  if (anchors.empty()) return {0.0, 0.0};
  double h0 = s[0].head(), h1 = s[1].head(), h2 = s[2].head();
  double prev = std::min({h0, h1, h2});
  double value = cap_total;
  long slope = 0;  // (right-side count) - (left-side count)
  for (std::size_t left = lo.size() + anchors.size() + hi.size(); left > 0; --left) {
    if (h0 <= h1 && h0 <= h2) {
      value += static_cast<double>(slope) * (h0 - prev);
      prev = h0;
      visit(ScanEvent::left, h0, value);
      --slope;
      h0 = s[0].advance();
    } else if (h1 <= h2) {
      value += static_cast<double>(slope) * (h1 - prev);
      prev = h1;
      visit(ScanEvent::anchor_lo, h1, value);
      slope += 2;
      if (value < best.value) best = {h1, value};
      h1 = s[1].advance();
    } else {
      value += static_cast<double>(slope) * (h2 - prev);
      prev = h2;
      visit(ScanEvent::right, h2, value);
      --slope;
      h2 = s[2].advance();
    }
  }
  return best;
}

/// Sweep for min_t sum_i min{dist(t, [bl_i, bu_i]), xi_i} over sorted lists
/// lo = {bl_i - xi_i}, bl, bu, hi = {bu_i + xi_i}.
template <class Visit = detail::NoVisit>
ScalarSolution scan_trunc_abs_interval(std::span<const double> lo, double lo_shift,
                                       std::span<const double> bl, std::span<const double> bu,
                                       std::span<const double> hi, double hi_shift,
                                       double cap_total, Visit&& visit = {}) {
  detail::Stream s[4] = {{lo.data(), lo.size(), lo_shift},
                         {bl.data(), bl.size(), 0.0},
                         {bu.data(), bu.size(), 0.0},
                         {hi.data(), hi.size(), hi_shift}};
  ScalarSolution best{0.0, std::numeric_limits<double>::infinity()};
  if (bl.empty()) return {0.0, 0.0};
  double h0 = s[0].head(), h1 = s[1].head(), h2 = s[2].head(), h3 = s[3].head();
  double prev = std::min({h0, h1, h2, h3});
  double value = cap_total;
  long slope = 0;
  for (std::size_t left = lo.size() + bl.size() + bu.size() + hi.size(); left > 0; --left) {
    // Ties resolve to the lower stream: left < lower end < upper end < right.
    const double m01 = std::min(h0, h1), m23 = std::min(h2, h3);
    if (m01 <= m23) {
      value += static_cast<double>(slope) * (m01 - prev);
      prev = m01;
      if (h0 <= h1) {
        visit(ScanEvent::left, h0, value);
        --slope;
        h0 = s[0].advance();
      } else {
        visit(ScanEvent::anchor_lo, h1, value);
        ++slope;
        if (value < best.value) best = {h1, value};
        h1 = s[1].advance();
      }
    } else {
      value += static_cast<double>(slope) * (m23 - prev);
      prev = m23;
      if (h2 <= h3) {
        visit(ScanEvent::anchor_hi, h2, value);
        ++slope;
        if (value < best.value) best = {h2, value};
        h2 = s[2].advance();
      } else {
        visit(ScanEvent::right, h3, value);
        --slope;
        h3 = s[3].advance();
      }
    }
  }
  return best;
}

/// Stabbing sweep over sorted left and right endpoints; lefts win ties.
/// visit(key, depth_before, depth_after) runs at every endpoint.
template <class Visit = detail::NoVisit>
StabResult scan_stab(std::span<const double> lefts, double left_shift, std::span<const double> rights,
                     double right_shift, Visit&& visit = {}) {
  detail::Stream s[2] = {{lefts.data(), lefts.size(), left_shift},
                         {rights.data(), rights.size(), right_shift}};
  StabResult best;
  std::size_t count = 0;
  double h0 = s[0].head(), h1 = s[1].head();
  for (std::size_t left = lefts.size() + rights.size(); left > 0; --left) {
    if (h0 <= h1) {
      ++count;
      if constexpr (!std::is_same_v<std::decay_t<Visit>, detail::NoVisit>) visit(h0, count - 1, count);
      if (count > best.count) best = {h0, count};
      h0 = s[0].advance();
    } else {
      --count;
      if constexpr (!std::is_same_v<std::decay_t<Visit>, detail::NoVisit>) visit(h1, count + 1, count);
      h1 = s[1].advance();
    }
  }
  return best;
}

namespace detail {

inline void check_thresholds(std::size_t n, const Thresholds& xi) {
  if (n == 0) throw std::invalid_argument("scalar solver: empty instance");
  if (!xi.uniform && xi.per_pair.size() != n)
    throw std::invalid_argument("scalar solver: threshold count mismatch");
  if (xi.uniform && !(xi.shared >= 0.0)) throw std::invalid_argument("scalar solver: negative threshold");
}

struct AbsScratch {
  std::vector<double> s0, s1, s2, s3;
};

inline AbsScratch& abs_scratch() {
  thread_local AbsScratch s;
  return s;
}

}  // namespace detail

/// min_t sum_i min{|a_i - t|, xi_i}; the minimizer is one of the a_i.
inline ScalarSolution solve_trunc_abs_point(std::span<const double> a, const Thresholds& xi) {
  detail::check_thresholds(a.size(), xi);
  auto& sc = detail::abs_scratch();
  sc.s1.assign(a.begin(), a.end());
  sort_values(sc.s1);
  const double cap = xi.total(a.size());
  if (xi.uniform) return scan_trunc_abs_point(sc.s1, -xi.shared, sc.s1, sc.s1, xi.shared, cap);
  sc.s0.resize(a.size());
  sc.s2.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    sc.s0[i] = a[i] - xi.per_pair[i];
    sc.s2[i] = a[i] + xi.per_pair[i];
  }
  sort_values(sc.s0);
  sort_values(sc.s2);
  return scan_trunc_abs_point(sc.s0, 0.0, sc.s1, sc.s2, 0.0, cap);
}

inline ScalarSolution solve_trunc_abs_point(const TruncAbsPointInstance& inst) {
  if (inst.a.size() != inst.xi.size()) throw std::invalid_argument("solve_trunc_abs_point: length mismatch");
  for (std::size_t i = 0; i < inst.a.size(); ++i)
    if (!std::isfinite(inst.a[i]) || !(inst.xi[i] >= 0.0) || !std::isfinite(inst.xi[i]))
      throw std::invalid_argument("solve_trunc_abs_point: bad value");
  return solve_trunc_abs_point(inst.a, Thresholds::each(inst.xi));
}

/// min_t sum_i min{dist(t, [bl_i, bu_i]), xi_i} with bl/bu given as separate arrays.
inline ScalarSolution solve_trunc_abs_interval(std::span<const double> bl, std::span<const double> bu,
                                               const Thresholds& xi) {
  detail::check_thresholds(bl.size(), xi);
  if (bl.size() != bu.size()) throw std::invalid_argument("solve_trunc_abs_interval: length mismatch");
  auto& sc = detail::abs_scratch();
  const double cap = xi.total(bl.size());
  if (xi.uniform) {
    sc.s1.assign(bl.begin(), bl.end());
    sc.s2.assign(bu.begin(), bu.end());
    sort_values(sc.s1);
    sort_values(sc.s2);
    return scan_trunc_abs_interval(sc.s1, -xi.shared, sc.s1, sc.s2, sc.s2, xi.shared, cap);
  }
  const std::size_t n = bl.size();
  sc.s0.resize(n);
  sc.s3.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sc.s0[i] = bl[i] - xi.per_pair[i];
    sc.s3[i] = bu[i] + xi.per_pair[i];
  }
  sc.s1.assign(bl.begin(), bl.end());
  sc.s2.assign(bu.begin(), bu.end());
  sort_values(sc.s0);
  sort_values(sc.s1);
  sort_values(sc.s2);
  sort_values(sc.s3);
  return scan_trunc_abs_interval(sc.s0, 0.0, sc.s1, sc.s2, sc.s3, 0.0, cap);
}

inline ScalarSolution solve_trunc_abs_interval(const TruncAbsIntervalInstance& inst) {
  if (inst.b.size() != inst.xi.size())
    throw std::invalid_argument("solve_trunc_abs_interval: length mismatch");
  std::vector<double> bl(inst.b.size()), bu(inst.b.size());
  for (std::size_t i = 0; i < inst.b.size(); ++i) {
    if (!inst.b[i].valid() || !std::isfinite(inst.b[i].lo) || !std::isfinite(inst.b[i].hi))
      throw std::invalid_argument("solve_trunc_abs_interval: interval with lo > hi");
    if (!(inst.xi[i] >= 0.0)) throw std::invalid_argument("solve_trunc_abs_interval: negative threshold");
    bl[i] = inst.b[i].lo;
    bu[i] = inst.b[i].hi;
  }
  return solve_trunc_abs_interval(bl, bu, Thresholds::each(inst.xi));
}

/// Point of maximal depth among closed intervals; the stabber is a left endpoint.
inline StabResult interval_stab(std::span<const double> lo, std::span<const double> hi) {
  if (lo.size() != hi.size()) throw std::invalid_argument("interval_stab: length mismatch");
  if (lo.empty()) return {};
  auto& sc = detail::abs_scratch();
  sc.s0.assign(lo.begin(), lo.end());
  sc.s3.assign(hi.begin(), hi.end());
  sort_values(sc.s0);
  sort_values(sc.s3);
  return scan_stab(sc.s0, 0.0, sc.s3, 0.0);
}

inline StabResult interval_stab(const StabSet& set) {
  std::vector<double> lo(set.intervals.size()), hi(set.intervals.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!set.intervals[i].valid()) throw std::invalid_argument("interval_stab: interval with lo > hi");
    lo[i] = set.intervals[i].lo;
    hi[i] = set.intervals[i].hi;
  }
  return interval_stab(lo, hi);
}

// ---- Truncated least squares ----

namespace detail {

struct SqEvent {
  double key;
  std::uint32_t pair;
  ScanEvent kind;
};

inline void sort_events(std::vector<SqEvent>& ev) {
  std::sort(ev.begin(), ev.end(), [](const SqEvent& p, const SqEvent& q) {
    if (p.key != q.key) return p.key < q.key;
    if (p.kind != q.kind) return p.kind < q.kind;
    return p.pair < q.pair;
  });
}

}  // namespace detail

/// min_t sum_i min{(a_i - t)^2, xi_i^2}. On each segment between breakpoints the
/// uncapped terms form one quadratic whose minimizer is their mean, clamped to
/// the segment. The quadratic is carried as (count, sum, sum of squares).
inline ScalarSolution solve_trunc_sq_point(std::span<const double> a, const Thresholds& xi) {
  detail::check_thresholds(a.size(), xi);
  const std::size_t n = a.size();
  thread_local std::vector<detail::SqEvent> ev;
  ev.clear();
  ev.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    ev.push_back({a[i] - xi[i], static_cast<std::uint32_t>(i), ScanEvent::left});
    ev.push_back({a[i] + xi[i], static_cast<std::uint32_t>(i), ScanEvent::right});
  }
  detail::sort_events(ev);
  double capped = xi.total_sq(n);
  ScalarSolution best{ev.front().key, capped};
  long count = 0;
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    const double ai = a[ev[k].pair], x = xi[ev[k].pair];
    if (ev[k].kind == ScanEvent::left) {
      ++count;
      sum += ai;
      sumsq += ai * ai;
      capped -= x * x;
    } else {
      --count;
      if (count == 0) {
        sum = 0.0;
        sumsq = 0.0;
      } else {
        sum -= ai;
        sumsq -= ai * ai;
      }
      capped += x * x;
    }
    const double lo = ev[k].key, hi = ev[k + 1].key;
    double t = lo, value = capped;
    if (count > 0) {
      t = std::clamp(sum / static_cast<double>(count), lo, hi);
      value = std::max(0.0, sumsq - 2.0 * t * sum + static_cast<double>(count) * t * t) + capped;
    }
    if (value < best.value) best = {t, value};
  }
  return best;
}

inline ScalarSolution solve_trunc_sq_point(const TruncAbsPointInstance& inst) {
  if (inst.a.size() != inst.xi.size()) throw std::invalid_argument("solve_trunc_sq_point: length mismatch");
  for (double v : inst.xi)
    if (!(v >= 0.0)) throw std::invalid_argument("solve_trunc_sq_point: negative threshold");
  return solve_trunc_sq_point(inst.a, Thresholds::each(inst.xi));
}

/// min_t sum_i min{dist(t, [bl_i, bu_i])^2, xi_i^2}. Each segment re-minimizes
/// over the active quadratic terms directly, which is O(N) per segment and
/// O(N^2) overall.
inline ScalarSolution solve_trunc_sq_interval(std::span<const double> bl, std::span<const double> bu,
                                              const Thresholds& xi) {
  detail::check_thresholds(bl.size(), xi);
  if (bl.size() != bu.size()) throw std::invalid_argument("solve_trunc_sq_interval: length mismatch");
  const std::size_t n = bl.size();
  thread_local std::vector<detail::SqEvent> ev;
  ev.clear();
  ev.reserve(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = static_cast<std::uint32_t>(i);
    ev.push_back({bl[i] - xi[i], p, ScanEvent::left});
    ev.push_back({bl[i], p, ScanEvent::anchor_lo});
    ev.push_back({bu[i], p, ScanEvent::anchor_hi});
    ev.push_back({bu[i] + xi[i], p, ScanEvent::right});
  }
  detail::sort_events(ev);

  // Active quadratic anchors, with slot positions for O(1) removal.
  thread_local std::vector<double> active;
  thread_local std::vector<std::uint32_t> owner;
  thread_local std::vector<std::uint32_t> slot;
  active.clear();
  owner.clear();
  slot.assign(n, 0);
  auto add = [&](std::uint32_t p, double anchor) {
    slot[p] = static_cast<std::uint32_t>(active.size());
    active.push_back(anchor);
    owner.push_back(p);
  };
  auto remove = [&](std::uint32_t p) {
    const std::uint32_t s = slot[p];
    active[s] = active.back();
    owner[s] = owner.back();
    slot[owner[s]] = s;
    active.pop_back();
    owner.pop_back();
  };

  double capped = xi.total_sq(n);
  ScalarSolution best{ev.front().key, capped};
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    const std::uint32_t p = ev[k].pair;
    const double x = xi[p];
    switch (ev[k].kind) {
      case ScanEvent::left:
        add(p, bl[p]);
        capped -= x * x;
        break;
      case ScanEvent::anchor_lo:
        remove(p);
        break;
      case ScanEvent::anchor_hi:
        add(p, bu[p]);
        break;
      case ScanEvent::right:
        remove(p);
        capped += x * x;
        break;
    }
    const double lo = ev[k].key, hi = ev[k + 1].key;
    double t = lo, value = capped;
    if (!active.empty()) {
      double mean = 0.0;
      for (double c : active) mean += c;
      mean /= static_cast<double>(active.size());
      t = std::clamp(mean, lo, hi);
      double q = 0.0;
      for (double c : active) q += (c - t) * (c - t);
      value = q + capped;
    }
    if (value < best.value) best = {t, value};
  }
  return best;
}

inline ScalarSolution solve_trunc_sq_interval(const TruncAbsIntervalInstance& inst) {
  if (inst.b.size() != inst.xi.size())
    throw std::invalid_argument("solve_trunc_sq_interval: length mismatch");
  std::vector<double> bl(inst.b.size()), bu(inst.b.size());
  for (std::size_t i = 0; i < inst.b.size(); ++i) {
    if (!inst.b[i].valid()) throw std::invalid_argument("solve_trunc_sq_interval: interval with lo > hi");
    if (!(inst.xi[i] >= 0.0)) throw std::invalid_argument("solve_trunc_sq_interval: negative threshold");
    bl[i] = inst.b[i].lo;
    bu[i] = inst.b[i].hi;
  }
  return solve_trunc_sq_interval(bl, bu, Thresholds::each(inst.xi));
}

}  // namespace tear
