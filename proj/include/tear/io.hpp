#pragma once

// Correspondence CSV, ground-truth and result records.
//
// CSV rows are x1,x2,x3,y1,y2,y3[,xi]; '#' starts a comment. Numbers are
// written in shortest round-trip form.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tear/bench.hpp"
#include "tear/errors.hpp"
#include "tear/geometry.hpp"
#include "tear/pipeline.hpp"

namespace tear::io {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ParseError("not a number: '" + std::string(field) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value", line);
  return v;
}

/// Reads pairs. xi_override replaces every threshold; rows without a
/// threshold need it.
inline PointPairSet read_pairs(std::istream& in, std::optional<double> xi_override = std::nullopt) {
  if (xi_override && !(*xi_override >= 0.0 && std::isfinite(*xi_override)))
    throw std::invalid_argument("xi must be a finite nonnegative number");
  PointPairSet p;
  std::string raw;
  std::size_t line = 0;
  std::vector<double> v;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    v.clear();
    for (std::size_t start = 0;;) {
      const std::size_t comma = s.find(',', start);
      v.push_back(parse_number(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start), line));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (v.size() != 6 && v.size() != 7)
      throw ParseError("expected 6 or 7 fields, got " + std::to_string(v.size()), line);
    double xi = 0.0;
    if (xi_override) {
      xi = *xi_override;
    } else if (v.size() == 7) {
      xi = v[6];
      if (xi < 0.0) throw ParseError("negative xi", line);
    } else {
      throw ParseError("row has no xi and no --xi was given", line);
    }
    p.push_back({v[0], v[1], v[2]}, {v[3], v[4], v[5]}, xi);
  }
  if (p.size() == 0) throw ParseError("no correspondences", line);
  return p;
}

inline PointPairSet read_pairs_file(const std::string& path, std::optional<double> xi_override = std::nullopt) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return read_pairs(f, xi_override);
}

inline void write_pairs(std::ostream& out, const PointPairSet& p) {
  out << "# x1,x2,x3,y1,y2,y3,xi\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& x = p.x[i];
    const auto& y = p.y[i];
    out << format_double(x.x()) << ',' << format_double(x.y()) << ',' << format_double(x.z()) << ','
        << format_double(y.x()) << ',' << format_double(y.y()) << ',' << format_double(y.z()) << ','
        << format_double(p.xi[i]) << '\n';
  }
}

inline json pose_json(const PoseEstimate& pose) {
  json R = json::array(), t = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R.push_back(pose.R(r, c));
  for (int k = 0; k < 3; ++k) t.push_back(pose.t[k]);
  return {{"R", R}, {"t", t}};
}

inline PoseEstimate pose_from_json(const json& j) {
  PoseEstimate p;
  const auto& R = j.at("R");
  const auto& t = j.at("t");
  if (R.size() != 9 || t.size() != 3) throw std::runtime_error("pose: expected 9 rotation and 3 translation entries");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.R(r, c) = R.at(3 * r + c).get<double>();
  for (int k = 0; k < 3; ++k) p.t[k] = t.at(k).get<double>();
  if (!is_rotation(p.R, 1e-9)) throw std::runtime_error("pose: R is not a rotation");
  return p;
}

inline json ground_truth_json(const bench::Synthetic& s, const bench::SyntheticConfig& cfg) {
  json outliers = json::array();
  for (std::size_t i = 0; i < s.gt.inlier_mask.size(); ++i)
    if (!s.gt.inlier_mask[i]) outliers.push_back(i);
  return {{"n", cfg.n},
          {"outlier_ratio", cfg.outlier_ratio},
          {"sigma", cfg.sigma},
          {"tau", cfg.tau},
          {"seed", cfg.seed},
          {"unit_cube", cfg.unit_cube},
          {"xi", cfg.threshold()},
          {"pose", pose_json(s.gt.pose)},
          {"outliers", outliers}};
}

inline bench::GroundTruth ground_truth_from_json(const json& j) {
  bench::GroundTruth gt;
  gt.pose = pose_from_json(j.at("pose"));
  const auto n = j.at("n").get<std::size_t>();
  gt.inlier_mask.assign(n, true);
  for (const auto& o : j.at("outliers")) {
    const auto i = o.get<std::size_t>();
    if (i >= n) throw std::runtime_error("ground truth: outlier index out of range");
    gt.inlier_mask[i] = false;
  }
  return gt;
}

inline json report_json(const StageReport& r, bool timing) {
  json j = {{"best_value", r.best_value},
            {"lower_bound", r.lower_bound},
            {"gap", r.gap},
            {"nodes_expanded", r.nodes_expanded},
            {"nodes_pruned", r.nodes_pruned},
            {"nodes_finalized", r.nodes_finalized},
            {"termination", bnb::to_string(r.termination)}};
  if (timing) j["wall_time_s"] = r.wall_time;
  return j;
}

inline json stage_json(const StageSolution& s, bool timing) {
  return {{"r", {s.r[0], s.r[1], s.r[2]}},
          {"t", s.t},
          {"value", s.value},
          {"inlier_count", s.inliers.size()},
          {"inliers", s.inliers},
          {"bnb", report_json(s.report, timing)}};
}

inline json config_json(const SolverConfig& c, double epsilon1, double epsilon2) {
  // Thread count is left out: it does not change the result.
  return {{"loss", to_string(c.loss)},
          {"epsilon_stage1", epsilon1},
          {"epsilon_stage2", epsilon2},
          {"min_resolution", c.min_resolution},
          {"max_nodes", c.max_nodes},
          {"refine_iterations", c.refine_iterations}};
}

/// Result record. Timing fields appear only when asked for, so records of
/// identical runs compare equal byte for byte.
inline json result_json(const RegistrationResult& r, const SolverConfig& cfg, std::size_t n, bool timing) {
  json j = {{"pose", pose_json(r.pose)},
            {"n", n},
            {"final_inlier_count", r.final_inliers.size()},
            {"final_inliers", r.final_inliers},
            {"refits", r.refits},
            {"stage1", stage_json(r.stage1, timing)},
            {"stage2", stage_json(r.stage2, timing)},
            {"config", config_json(cfg, r.stage1.epsilon, r.stage2.epsilon)}};
  if (r.stage1.report.termination == bnb::Termination::node_limit ||
      r.stage2.report.termination == bnb::Termination::node_limit)
    j["warning"] = "node limit reached; the result may not be optimal";
  return j;
}

inline json metrics_json(const bench::Metrics& m, bool timing) {
  json j = {{"re_deg", m.re_deg},     {"te", m.te},
            {"f1", m.f1},             {"f1_stage2", m.f1_stage2},
            {"f1_stage1", m.f1_stage1}, {"rr_flag", m.recall_flag}};
  if (timing) {
    j["time_s"] = m.wall_time;
    j["peak_mem_bytes"] = m.peak_memory;
  }
  return j;
}

inline const char* bench_csv_header() {
  return "n,ratio,trial,loss,re_deg,te,f1,f1_stage2,f1_stage1,rr_flag,time_s,stage1_time_s,peak_mem_bytes,"
         "stage1_inliers,final_inliers,error";
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline void write_bench_csv(std::ostream& out, const std::vector<bench::Row>& rows) {
  out << bench_csv_header() << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.n << ',' << format_double(r.ratio) << ',' << r.trial << ',' << to_string(r.loss) << ','
        << format_double(m.re_deg) << ',' << format_double(m.te) << ',' << format_double(m.f1) << ','
        << format_double(m.f1_stage2) << ',' << format_double(m.f1_stage1) << ',' << (m.recall_flag ? 1 : 0) << ','
        << format_double(m.wall_time) << ',' << format_double(r.stage1_time) << ',' << m.peak_memory << ','
        << r.stage1_inliers << ',' << r.final_inliers << ',' << csv_escape(r.error) << '\n';
  }
}

inline json bench_json(const std::vector<bench::Row>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = {{"n", r.n}, {"ratio", r.ratio}, {"trial", r.trial}, {"loss", to_string(r.loss)}};
    j.update(metrics_json(r.metrics, true));
    j["stage1_time_s"] = r.stage1_time;
    j["stage1_inliers"] = r.stage1_inliers;
    j["final_inliers"] = r.final_inliers;
    j["error"] = r.error;
    out.push_back(j);
  }
  return out;
}

}  // namespace tear::io
