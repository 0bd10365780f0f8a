#pragma once

// Best-first branch and bound. The coordinator owns the queue; child bounds
// may be evaluated on a worker pool, then replayed in child order so the run
// is identical for any thread count.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "tear/errors.hpp"

namespace tear::bnb {

/// Fixed set of threads that run parallel_for jobs. One thread means inline.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned threads = 1) {
    const unsigned extra = threads > 1 ? threads - 1 : 0;
    for (unsigned k = 0; k < extra; ++k) workers_.emplace_back([this] { loop(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

  /// Runs fn(0..n-1) and blocks until all are done; rethrows the first failure.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (workers_.empty() || n <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(m_);
      job_ = &fn;
      n_ = n;
      next_.store(0);
      finished_ = 0;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    work();
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return finished_ == workers_.size(); });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void work() {
    for (std::size_t i = next_.fetch_add(1); i < n_; i = next_.fetch_add(1)) {
      try {
        (*job_)(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(m_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }
  void loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work();
      {
        std::lock_guard<std::mutex> lk(m_);
        ++finished_;
      }
      done_cv_.notify_one();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t n_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t finished_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

struct Config {
  double epsilon = 1e-6;
  double min_resolution = 1e-3;
  std::size_t max_nodes = 50'000'000;
};

enum class Termination { converged, exhausted, node_limit };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged:
      return "converged";
    case Termination::exhausted:
      return "exhausted";
    default:
      return "node_limit";
  }
}

template <class Point>
struct Evaluation {
  double value = std::numeric_limits<double>::infinity();
  Point point{};
};

template <class Point>
struct Report {
  Point best_point{};
  double best_value = std::numeric_limits<double>::infinity();
  double lower_bound = -std::numeric_limits<double>::infinity();
  double gap = 0.0;
  std::size_t nodes_expanded = 0;
  std::size_t nodes_pruned = 0;
  std::size_t nodes_finalized = 0;
  Termination termination = Termination::exhausted;
  double wall_time = 0.0;
};

/// Optional record of a run, for property tests.
struct Trace {
  std::vector<double> popped_lower_bounds;
  std::vector<double> incumbents;
  std::vector<std::pair<double, double>> parent_child_lower_bounds;
  std::vector<std::pair<double, double>> expanded_bound_and_incumbent;
};

namespace detail {

template <class Branch>
struct Node {
  Branch branch;
  double lower;
  std::uint64_t seq;
};

template <class Branch>
struct Later {
  bool operator()(const Node<Branch>& a, const Node<Branch>& b) const {
    if (a.lower != b.lower) return a.lower > b.lower;
    return a.seq > b.seq;
  }
};

// lower(B) or lower(B, incumbent); the incumbent is the best value when the
// parent was expanded, so a bound may ignore regions that cannot beat it.
template <class Lower, class Branch>
double call_lower(Lower& lower, const Branch& b, double incumbent) {
  if constexpr (std::is_invocable_v<Lower&, const Branch&, double>) {
    return lower(b, incumbent);
  } else {
    return lower(b);
  }
}

inline void check_bounds(double lower, double upper) {
  const double tol = 1e-9 * std::max(1.0, std::abs(upper));
  if (lower > upper + tol)
    throw InternalConsistencyError("bnb: lower bound " + std::to_string(lower) +
                                   " exceeds upper bound " + std::to_string(upper));
}

}  // namespace detail

/// Minimizes over the root branch. upper(B) evaluates a feasible point in B
/// (its center) and returns Evaluation<Point>; lower(B) returns a value no
/// larger than the objective anywhere in B; split(B) returns the children.
/// Branch must provide narrower_than(double). A lower bound that takes the
/// incumbent only has to hold where the objective is below that incumbent.
template <class Branch, class Upper, class Lower, class Split>
auto run(Upper&& upper, Lower&& lower, Split&& split, const Branch& root, const Config& cfg,
         WorkerPool* pool = nullptr, Trace* trace = nullptr) {
  using Eval = std::invoke_result_t<Upper&, const Branch&>;
  using Point = decltype(std::declval<Eval>().point);
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("bnb: epsilon must be positive");
  if (!(cfg.min_resolution > 0.0)) throw std::invalid_argument("bnb: min_resolution must be positive");

  const auto start = std::chrono::steady_clock::now();
  Report<Point> rep;
  std::priority_queue<detail::Node<Branch>, std::vector<detail::Node<Branch>>, detail::Later<Branch>> queue;
  std::uint64_t seq = 0;
  double finalized_lower = std::numeric_limits<double>::infinity();

  {
    const Eval e = upper(root);
    const double l = detail::call_lower(lower, root, e.value);
    detail::check_bounds(l, e.value);
    rep.best_value = e.value;
    rep.best_point = e.point;
    if (trace) trace->incumbents.push_back(rep.best_value);
    queue.push({root, l, seq++});
  }

  std::vector<Branch> children;
  std::vector<double> child_lower;
  std::vector<Eval> child_upper;
  std::vector<char> need_upper;
  double global_lower = std::numeric_limits<double>::infinity();
  rep.termination = Termination::exhausted;

  while (!queue.empty()) {
    if (rep.nodes_expanded >= cfg.max_nodes) {
      rep.termination = Termination::node_limit;
      global_lower = queue.top().lower;
      break;
    }
    detail::Node<Branch> node = queue.top();
    queue.pop();
    if (trace) trace->popped_lower_bounds.push_back(node.lower);
    if (rep.best_value - node.lower < cfg.epsilon) {
      rep.termination = Termination::converged;
      global_lower = node.lower;
      break;
    }
    if (node.branch.narrower_than(cfg.min_resolution)) {
      ++rep.nodes_finalized;
      finalized_lower = std::min(finalized_lower, node.lower);
      continue;
    }
    ++rep.nodes_expanded;
    if (trace) trace->expanded_bound_and_incumbent.emplace_back(node.lower, rep.best_value);

    const auto split_result = split(node.branch);
    children.assign(split_result.begin(), split_result.end());
    const std::size_t k = children.size();
    const double incumbent = rep.best_value;
    child_lower.assign(k, 0.0);
    child_upper.assign(k, Eval{});

    if (pool && pool->size() > 1) {
      // Evaluate everything that the sequential loop could need, then replay it.
      pool->parallel_for(k, [&](std::size_t i) { child_lower[i] = detail::call_lower(lower, children[i], incumbent); });
      need_upper.assign(k, 0);
      for (std::size_t i = 0; i < k; ++i) need_upper[i] = child_lower[i] < rep.best_value;
      pool->parallel_for(k, [&](std::size_t i) {
        if (need_upper[i]) child_upper[i] = upper(children[i]);
      });
    }

    for (std::size_t i = 0; i < k; ++i) {
      if (!(pool && pool->size() > 1)) child_lower[i] = detail::call_lower(lower, children[i], incumbent);
      const double l = child_lower[i];
      if (trace) trace->parent_child_lower_bounds.emplace_back(node.lower, l);
      if (l >= rep.best_value) {
        ++rep.nodes_pruned;
        continue;
      }
      if (!(pool && pool->size() > 1)) child_upper[i] = upper(children[i]);
      const Eval& e = child_upper[i];
      detail::check_bounds(l, e.value);
      if (e.value < rep.best_value) {
        rep.best_value = e.value;
        rep.best_point = e.point;
        if (trace) trace->incumbents.push_back(rep.best_value);
      }
      queue.push({children[i], l, seq++});
    }
  }

  global_lower = std::min({global_lower, finalized_lower, rep.best_value});
  rep.lower_bound = global_lower;
  rep.gap = rep.best_value - global_lower;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace tear::bnb
