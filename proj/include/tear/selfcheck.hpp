#pragma once

// Randomized comparison of the fast solvers against brute-force oracles and of
// the first-stage bounds against grid samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tear/pipeline.hpp"
#include "tear/scalar_oracles.hpp"
#include "tear/scalar_solvers.hpp"

namespace tear::selfcheck {

struct Options {
  std::size_t count = 200;
  std::size_t max_n = 40;
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
  /// Test hook: the fast solvers see the instance without its last element.
  bool inject_fault = false;
};

struct Outcome {
  std::size_t checks = 0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
};

namespace detail {

using json = nlohmann::ordered_json;

template <class T>
std::vector<T> drop_last(std::vector<T> v, bool fault) {
  if (fault && v.size() > 1) v.pop_back();
  return v;
}

inline json dump(const std::vector<double>& a, const std::vector<double>& xi) { return {{"a", a}, {"xi", xi}}; }
inline json dump(const std::vector<ScalarInterval>& b, const std::vector<double>& xi) {
  json lo = json::array(), hi = json::array();
  for (const auto& v : b) {
    lo.push_back(v.lo);
    hi.push_back(v.hi);
  }
  return {{"lo", lo}, {"hi", hi}, {"xi", xi}};
}

}  // namespace detail

/// Runs opt.count rounds of every check. Failing instances are written to
/// err as one JSON line each.
inline Outcome run(const Options& opt, std::ostream& err) {
  using detail::json;
  Outcome out;
  const auto fail = [&](const std::string& check, std::size_t round, const json& instance, double want, double got) {
    ++out.failures;
    json j = {{"check", check}, {"round", round}, {"expected", want}, {"got", got}, {"instance", instance}};
    err << "FAIL " << j.dump() << '\n';
  };
  const std::size_t max_n = std::max<std::size_t>(1, opt.max_n);
  for (std::size_t round = 0; round < opt.count; ++round) {
    std::mt19937_64 rng(opt.seed * 0x9e3779b97f4a7c15ull + round);
    std::uniform_int_distribution<std::size_t> un(1, max_n);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t n = un(rng);
    const bool coarse = round % 3 == 0;  // repeated values
    auto value = [&] { return coarse ? std::round(4.0 * g(rng)) / 4.0 : g(rng); };
    auto thresh = [&] { return u01(rng) < 0.1 ? 0.0 : 0.05 + u01(rng); };

    TruncAbsPointInstance pt;
    TruncAbsIntervalInstance iv;
    StabSet st;
    for (std::size_t i = 0; i < n; ++i) {
      pt.a.push_back(value());
      pt.xi.push_back(thresh());
      const double lo = value(), w = u01(rng) < 0.2 ? 0.0 : std::abs(value());
      iv.b.push_back({lo, lo + w});
      iv.xi.push_back(thresh());
      st.intervals.push_back({lo, lo + w});
    }
    const TruncAbsPointInstance pt_fast{detail::drop_last(pt.a, opt.inject_fault),
                                        detail::drop_last(pt.xi, opt.inject_fault)};
    const TruncAbsIntervalInstance iv_fast{detail::drop_last(iv.b, opt.inject_fault),
                                           detail::drop_last(iv.xi, opt.inject_fault)};
    const StabSet st_fast{detail::drop_last(st.intervals, opt.inject_fault)};

    const auto compare = [&](const char* name, const json& inst, const ScalarSolution& want,
                             const ScalarSolution& got, double at_argmin) {
      ++out.checks;
      if (std::abs(want.value - got.value) > opt.tolerance || std::abs(at_argmin - got.value) > opt.tolerance)
        fail(name, round, inst, want.value, got.value);
    };
    {
      const auto got = solve_trunc_abs_point(pt_fast);
      compare("trunc_abs_point", detail::dump(pt.a, pt.xi), oracle::oracle_trunc_abs_point(pt), got,
              oracle::trunc_abs_point_objective(pt, got.argmin));
    }
    {
      const auto got = solve_trunc_abs_interval(iv_fast);
      compare("trunc_abs_interval", detail::dump(iv.b, iv.xi), oracle::oracle_trunc_abs_interval(iv), got,
              oracle::trunc_abs_interval_objective(iv, got.argmin));
    }
    {
      const auto got = solve_trunc_sq_point(pt_fast);
      compare("trunc_sq_point", detail::dump(pt.a, pt.xi), oracle::oracle_trunc_sq_point(pt), got,
              oracle::trunc_sq_point_objective(pt, got.argmin));
    }
    {
      const auto got = solve_trunc_sq_interval(iv_fast);
      compare("trunc_sq_interval", detail::dump(iv.b, iv.xi), oracle::oracle_trunc_sq_interval(iv), got,
              oracle::trunc_sq_interval_objective(iv, got.argmin));
    }
    {
      ++out.checks;
      const auto want = oracle::oracle_interval_stab(st);
      const auto got = interval_stab(st_fast);
      if (want.count != got.count || oracle::stab_depth(st, got.stabber) != got.count)
        fail("interval_stab", round, detail::dump(st.intervals, {}), static_cast<double>(want.count),
             static_cast<double>(got.count));
    }
    {
      // Bound sandwich on a random box.
      PointPairSet p;
      for (std::size_t i = 0; i < n; ++i)
        p.push_back({g(rng), g(rng), g(rng)}, {g(rng), g(rng), g(rng)}, 0.05 + 0.3 * u01(rng));
      const double wa = kTwoPi * u01(rng) * u01(rng), wb = kPi * u01(rng) * u01(rng);
      const double a0 = (kTwoPi - wa) * u01(rng), b0 = (kPi - wb) * u01(rng);
      const AngleBox box{{a0, a0 + wa}, {b0, b0 + wb}};
      const auto b = make_first_stage_bounder<FirstStageLoss::tear>(p, false);
      double grid = 1e300;
      for (int i = 0; i <= 8; ++i)
        for (int j = 0; j <= 8; ++j)
          grid = std::min(grid, b.at_direction(angles_to_unit(a0 + wa * i / 8, b0 + wb * j / 8)).value);
      const double lo = b.lower(box).value, up = b.upper(box).value;
      ++out.checks;
      if (lo > grid + opt.tolerance || grid > up + opt.tolerance) {
        json inst = {{"box", {a0, a0 + wa, b0, b0 + wb}}, {"n", n}};
        fail("tear1_bounds", round, inst, grid, lo);
      }
    }
  }
  return out;
}

}  // namespace tear::selfcheck
