// tear: synthetic data, registration, benchmark sweeps and solver self-checks.
//
// Exit codes: 0 success, 1 other error, 2 parse/usage error,
// 3 insufficient inliers or empty stage-1 set, 4 selfcheck failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tear/bench.hpp"
#include "tear/io.hpp"
#include "tear/pipeline.hpp"
#include "tear/selfcheck.hpp"

namespace {

constexpr int kExitOther = 1;
constexpr int kExitParse = 2;
constexpr int kExitInliers = 3;
constexpr int kExitSelfcheck = 4;

unsigned default_threads() {
  if (const char* env = std::getenv("TEAR_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid TEAR_THREADS='" << env << "'\n";
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

struct SolverFlags {
  std::string loss = "tear";
  std::optional<double> epsilon;
  double resolution = 1e-3;
  std::size_t max_nodes = 50'000'000;
  int refine = 5;
  unsigned threads = 0;

  void add(CLI::App* app) {
    app->add_option("--loss", loss, "First-stage loss")->check(CLI::IsMember({"tear", "cm", "tls"}));
    app->add_option("--epsilon", epsilon, "Absolute optimality gap (default 1e-6 x truncation cap)")
        ->check(CLI::PositiveNumber);
    app->add_option("--resolution", resolution, "Smallest branch width in radians")->check(CLI::PositiveNumber);
    app->add_option("--max-nodes", max_nodes, "Node expansion limit per stage")->check(CLI::PositiveNumber);
    app->add_option("--refine", refine, "Refits on the final inlier set")->check(CLI::NonNegativeNumber);
    app->add_option("--threads", threads, "Worker threads (default: TEAR_THREADS or all cores)");
  }
  tear::SolverConfig config() const {
    tear::SolverConfig c;
    c.loss = tear::parse_loss(loss);
    c.epsilon = epsilon;
    c.min_resolution = resolution;
    c.max_nodes = max_nodes;
    c.refine_iterations = refine;
    c.threads = threads ? threads : default_threads();
    return c;
  }
};

std::vector<std::size_t> parse_sizes(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  for (double d : v) {
    if (!(d >= 1.0) || d != std::floor(d)) throw CLI::ValidationError("--n", "sizes must be positive integers");
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-robust rigid registration of 3-D point pairs"};
  app.require_subcommand(1);

  // synth
  tear::bench::SyntheticConfig syn;
  std::optional<double> syn_xi;
  std::string syn_out = "-", syn_gt;
  auto* synth = app.add_subcommand("synth", "Write a synthetic correspondence file");
  synth->add_option("--n", syn.n, "Number of pairs")->check(CLI::PositiveNumber);
  synth->add_option("--ratio", syn.outlier_ratio, "Outlier ratio in [0, 1)")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--sigma", syn.sigma, "Inlier noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--tau", syn.tau, "Outlier standard deviation")->check(CLI::PositiveNumber);
  synth->add_option("--seed", syn.seed, "Random seed");
  synth->add_option("--xi", syn_xi, "Threshold written per row (default 5.54 sigma)")->check(CLI::NonNegativeNumber);
  synth->add_flag("--unit-cube", syn.unit_cube, "Rescale source points into [0,1]^3");
  synth->add_option("--out,-o", syn_out, "Correspondence CSV (- for stdout)");
  synth->add_option("--gt", syn_gt, "Ground-truth JSON path");

  // register
  std::string reg_in, reg_out = "-", reg_gt, reg_preset = "3dmatch";
  std::optional<double> reg_xi;
  bool reg_timing = false;
  SolverFlags reg_flags;
  auto* reg = app.add_subcommand("register", "Register a correspondence file");
  reg->add_option("input", reg_in, "Correspondence CSV")->required();
  reg->add_option("--xi", reg_xi, "Threshold for every pair (overrides the file)")->check(CLI::NonNegativeNumber);
  reg->add_option("--out,-o", reg_out, "Result JSON (- for stdout)");
  reg->add_option("--gt", reg_gt, "Ground-truth JSON; adds accuracy metrics");
  reg->add_option("--preset", reg_preset, "Success thresholds")->check(CLI::IsMember({"3dmatch", "kitti", "eth"}));
  reg->add_flag("--record-timing", reg_timing, "Include wall times in the record");
  reg_flags.add(reg);

  // bench
  std::vector<double> bench_n{1000};
  std::vector<double> bench_ratios{0.9};
  tear::bench::SweepConfig sc;
  std::string bench_csv = "-", bench_json, bench_preset = "3dmatch";
  SolverFlags bench_flags;
  unsigned bench_threads = 1;
  auto* bench = app.add_subcommand("bench", "Run a synthetic sweep");
  bench->add_option("--n", bench_n, "Pair counts")->expected(1, -1);
  bench->add_option("--ratios", bench_ratios, "Outlier ratios")->expected(1, -1)->check(CLI::Range(0.0, 1.0));
  bench->add_option("--trials", sc.trials, "Trials per cell")->check(CLI::PositiveNumber);
  bench->add_option("--sigma", sc.sigma, "Inlier noise")->check(CLI::NonNegativeNumber);
  bench->add_option("--tau", sc.tau, "Outlier spread")->check(CLI::PositiveNumber);
  bench->add_option("--seed", sc.seed, "Sweep seed");
  bench->add_flag("--unit-cube", sc.unit_cube, "Rescale source points into [0,1]^3");
  bench->add_option("--preset", bench_preset, "Success thresholds")->check(CLI::IsMember({"3dmatch", "kitti", "eth"}));
  bench->add_option("--trial-threads", bench_threads, "Trials run concurrently")->check(CLI::PositiveNumber);
  bench->add_option("--csv", bench_csv, "CSV table path (- for stdout)");
  bench->add_option("--json", bench_json, "JSON table path");
  bench_flags.add(bench);

  // selfcheck
  tear::selfcheck::Options sco;
  auto* self = app.add_subcommand("selfcheck", "Compare solvers with brute-force oracles");
  self->add_option("--count", sco.count, "Random rounds");
  self->add_option("--max-n", sco.max_n, "Largest instance")->check(CLI::PositiveNumber);
  self->add_option("--seed", sco.seed, "Random seed");
  self->add_flag("--inject-fault", sco.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitParse;
  }

  try {
    if (synth->parsed()) {
      if (syn_xi) syn.xi = *syn_xi;
      const auto s = tear::bench::generate_synthetic(syn);
      std::ostringstream csv;
      tear::io::write_pairs(csv, s.pairs);
      write_text(syn_out, csv.str());
      if (!syn_gt.empty()) write_text(syn_gt, tear::io::ground_truth_json(s, syn).dump(2) + "\n");
      return 0;
    }

    if (reg->parsed()) {
      const auto pairs = tear::io::read_pairs_file(reg_in, reg_xi);
      const auto cfg = reg_flags.config();
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = tear::register_pairs(pairs, cfg);
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      auto j = tear::io::result_json(res, cfg, pairs.size(), reg_timing);
      if (reg_timing) j["wall_time_s"] = elapsed;
      if (!reg_gt.empty()) {
        std::ifstream f(reg_gt);
        if (!f) throw std::runtime_error("cannot open '" + reg_gt + "'");
        const auto gt = tear::io::ground_truth_from_json(tear::io::json::parse(f));
        if (gt.inlier_mask.size() != pairs.size())
          throw std::runtime_error("ground truth has " + std::to_string(gt.inlier_mask.size()) + " pairs, input has " +
                                   std::to_string(pairs.size()));
        auto m = tear::bench::evaluate(res, gt, tear::bench::preset(reg_preset));
        m.wall_time = elapsed;
        m.peak_memory = tear::bench::peak_memory_bytes();
        j["metrics"] = tear::io::metrics_json(m, reg_timing);
      }
      write_text(reg_out, j.dump(2) + "\n");
      return 0;
    }

    if (bench->parsed()) {
      sc.n_values = parse_sizes(bench_n);
      sc.ratios = bench_ratios;
      for (double r : sc.ratios)
        if (r >= 1.0) throw CLI::ValidationError("--ratios", "ratios must be below 1");
      sc.thresholds = tear::bench::preset(bench_preset);
      sc.solver = bench_flags.config();
      sc.threads = bench_threads;
      if (bench_threads > 1) sc.solver.threads = 1;
      const auto rows = tear::bench::sweep(sc);
      std::ostringstream csv;
      tear::io::write_bench_csv(csv, rows);
      write_text(bench_csv, csv.str());
      if (!bench_json.empty()) write_text(bench_json, tear::io::bench_json(rows).dump(2) + "\n");
      return 0;
    }

    if (self->parsed()) {
      if (sco.count == 0) std::cerr << "warning: --count 0 runs no checks\n";
      const auto out = tear::selfcheck::run(sco, std::cerr);
      std::cout << "selfcheck: " << out.checks - out.failures << "/" << out.checks << " checks passed\n";
      if (!out.passed()) {
        std::cout << "selfcheck: FAIL\n";
        return kExitSelfcheck;
      }
      std::cout << "selfcheck: PASS\n";
      return 0;
    }
  } catch (const tear::ParseError& e) {
    std::cerr << "error: " << reg_in << ": " << e.what() << '\n';
    return kExitParse;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitParse;
  } catch (const tear::InsufficientInliers& e) {
    std::cerr << "error: " << e.what() << " (found " << e.found() << ")\n";
    return kExitInliers;
  } catch (const tear::RegistrationFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInliers;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
