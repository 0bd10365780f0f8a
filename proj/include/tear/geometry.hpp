#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "tear/errors.hpp"

namespace tear {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ScalarInterval {
  double lo = 0.0;
  double hi = 0.0;

  static constexpr ScalarInterval point(double v) { return {v, v}; }
  constexpr double width() const { return hi - lo; }
  constexpr double center() const { return 0.5 * (lo + hi); }
  constexpr bool contains(double v) const { return lo <= v && v <= hi; }
  constexpr bool valid() const { return lo <= hi; }
  constexpr ScalarInterval hull(const ScalarInterval& o) const {
    return {std::min(lo, o.lo), std::max(hi, o.hi)};
  }
  friend constexpr bool operator==(const ScalarInterval&, const ScalarInterval&) = default;
};

/// Rectangle in (alpha, beta) with alpha in [0, 2pi], beta in [0, pi].
struct AngleBox {
  ScalarInterval alpha{0.0, kTwoPi};
  ScalarInterval beta{0.0, kPi};

  static constexpr AngleBox full() { return {}; }
  constexpr std::pair<double, double> center() const { return {alpha.center(), beta.center()}; }
  constexpr bool narrower_than(double res) const {
    return alpha.width() < res && beta.width() < res;
  }
  bool valid() const {
    return alpha.valid() && beta.valid() && alpha.lo >= 0.0 && alpha.hi <= kTwoPi &&
           beta.lo >= 0.0 && beta.hi <= kPi;
  }
  /// Equal-area quadrants: alpha split first, then beta.
  std::array<AngleBox, 4> quadrants() const {
    const double am = alpha.center(), bm = beta.center();
    return {AngleBox{{alpha.lo, am}, {beta.lo, bm}}, AngleBox{{alpha.lo, am}, {bm, beta.hi}},
            AngleBox{{am, alpha.hi}, {beta.lo, bm}}, AngleBox{{am, alpha.hi}, {bm, beta.hi}}};
  }
};

/// One-dimensional alpha branch used by the second stage.
struct AlphaInterval {
  ScalarInterval alpha{0.0, kTwoPi};

  static constexpr AlphaInterval full() { return {}; }
  constexpr double center() const { return alpha.center(); }
  constexpr bool narrower_than(double res) const { return alpha.width() < res; }
  std::array<AlphaInterval, 2> halves() const {
    const double m = alpha.center();
    return {AlphaInterval{{alpha.lo, m}}, AlphaInterval{{m, alpha.hi}}};
  }
};

class UnitVector3 {
 public:
  UnitVector3() : v_(0.0, 0.0, 1.0) {}
  /// Throws std::invalid_argument unless |v| is 1 within 1e-9.
  explicit UnitVector3(const Eigen::Vector3d& v) : v_(v) {
    if (std::abs(v.norm() - 1.0) > 1e-9) throw std::invalid_argument("UnitVector3: not unit length");
  }
  static UnitVector3 normalized(const Eigen::Vector3d& v) {
    const double n = v.norm();
    if (!(n > 0.0)) throw std::invalid_argument("UnitVector3: zero vector");
    return UnitVector3(v / n);
  }
  const Eigen::Vector3d& vec() const { return v_; }
  double operator[](int i) const { return v_[i]; }
  double dot(const Eigen::Vector3d& x) const { return v_.dot(x); }

 private:
  Eigen::Vector3d v_;
};

struct PoseEstimate {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

inline bool is_rotation(const Eigen::Matrix3d& R, double tol = 1e-9) {
  if (!R.allFinite()) return false;
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

struct PointPairSet {
  std::vector<Eigen::Vector3d> x;
  std::vector<Eigen::Vector3d> y;
  std::vector<double> xi;

  std::size_t size() const { return x.size(); }
  void push_back(const Eigen::Vector3d& xs, const Eigen::Vector3d& yd, double threshold) {
    x.push_back(xs);
    y.push_back(yd);
    xi.push_back(threshold);
  }
  /// Throws std::invalid_argument on mismatched lengths, non-finite values or negative xi.
  void validate() const {
    if (x.size() != y.size() || x.size() != xi.size())
      throw std::invalid_argument("PointPairSet: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!x[i].allFinite() || !y[i].allFinite() || !std::isfinite(xi[i]))
        throw std::invalid_argument("PointPairSet: non-finite value at pair " + std::to_string(i));
      if (xi[i] < 0.0) throw std::invalid_argument("PointPairSet: negative threshold");
    }
  }
};

using IndexSet = std::vector<std::size_t>;

inline Eigen::Vector3d angles_to_unit(double alpha, double beta) {
  if (!(alpha >= 0.0 && alpha <= kTwoPi) || !(beta >= 0.0 && beta <= kPi))
    throw std::domain_error("angles_to_unit: angle outside [0,2pi]x[0,pi]");
  const double sb = std::sin(beta);
  return {sb * std::cos(alpha), sb * std::sin(alpha), std::cos(beta)};
}

/// Inverse of angles_to_unit; alpha is 0 at the poles.
inline std::pair<double, double> unit_to_angles(const Eigen::Vector3d& r) {
  const double beta = std::acos(std::clamp(r.z(), -1.0, 1.0));
  double alpha = std::atan2(r.y(), r.x());
  if (alpha < 0.0) alpha += kTwoPi;
  return {alpha, beta};
}

/// Range of cos(theta - phi) for theta in [theta.lo, theta.hi] and phi in [0, pi].
/// theta must lie within [0, pi] or within [pi, 2pi].
inline ScalarInterval cos_range(const ScalarInterval& theta, double phi) {
  if (!(phi >= 0.0 && phi <= kPi)) throw std::invalid_argument("cos_range: phi outside [0,pi]");
  if (!theta.valid() || theta.lo < 0.0 || theta.hi > kTwoPi)
    throw std::invalid_argument("cos_range: theta outside [0,2pi]");
  const double f1 = std::cos(theta.lo - phi);
  const double f2 = std::cos(theta.hi - phi);
  const double fmin = std::min(f1, f2), fmax = std::max(f1, f2);
  if (theta.hi <= kPi) {
    if (phi >= theta.hi || phi <= theta.lo) return {fmin, fmax};
    return {fmin, 1.0};
  }
  if (theta.lo >= kPi) {
    const double trough = phi + kPi;
    if (trough >= theta.hi || trough <= theta.lo) return {fmin, fmax};
    return {-1.0, fmax};
  }
  throw std::invalid_argument("cos_range: theta straddles pi, split it first");
}

namespace detail {

// Range of amp*cos(theta - phi) where (a, b) = amp*(sin phi, cos phi) for
// theta in the interval; folds phi into [0, pi] with a signed amplitude.
inline ScalarInterval signed_sinusoid_range(double a, double b, const ScalarInterval& theta) {
  const double amp = std::sqrt(a * a + b * b);
  if (amp == 0.0) return {0.0, 0.0};
  double phi = std::atan2(a, b);
  double sign = 1.0;
  if (phi < 0.0) {
    phi += kPi;
    sign = -1.0;
  }
  phi = std::min(phi, kPi);
  ScalarInterval c;
  if (theta.lo < kPi && theta.hi > kPi) {
    c = cos_range({theta.lo, kPi}, phi).hull(cos_range({kPi, theta.hi}, phi));
  } else {
    c = cos_range(theta, phi);
  }
  return sign > 0.0 ? ScalarInterval{amp * c.lo, amp * c.hi} : ScalarInterval{-amp * c.hi, -amp * c.lo};
}

}  // namespace detail

/// Range of b = y - r(alpha,beta)^T x over the box, through the two-stage
/// sinusoid bound: first over alpha for x1 cos + x2 sin, then over beta.
inline ScalarInterval residual_offset_range(const Eigen::Vector3d& x, double y, const AngleBox& box) {
  if (!box.valid()) throw std::invalid_argument("residual_offset_range: invalid box");
  // x1 cos(a) + x2 sin(a) = rho cos(a - alpha*) with (x2, x1) = rho (sin, cos) of alpha*.
  const ScalarInterval g = detail::signed_sinusoid_range(x.y(), x.x(), box.alpha);
  // Since sin(beta) >= 0, g sin(beta) + x3 cos(beta) is bracketed by the two extreme g values.
  const double hmax = detail::signed_sinusoid_range(g.hi, x.z(), box.beta).hi;
  const double hmin = detail::signed_sinusoid_range(g.lo, x.z(), box.beta).lo;
  return {y - hmax, y - hmin};
}

/// Batched form of residual_offset_range for many pairs over one box. Case
/// selection uses the derivative sign at the interval ends, so no per-pair trig.
class OffsetRangeKernel {
 public:
  explicit OffsetRangeKernel(const AngleBox& box) {
    if (!box.valid()) throw std::invalid_argument("OffsetRangeKernel: invalid box");
    if (box.alpha.width() > kPi) {
      pieces_ = 2;
      set_piece(0, box.alpha.lo, kPi);
      set_piece(1, kPi, box.alpha.hi);
    } else {
      set_piece(0, box.alpha.lo, box.alpha.hi);
    }
    sb1_ = std::sin(box.beta.lo);
    cb1_ = std::cos(box.beta.lo);
    sb2_ = std::sin(box.beta.hi);
    cb2_ = std::cos(box.beta.hi);
  }

  /// Range of x1 cos(a) + x2 sin(a) over the alpha interval; rho = hypot(x1, x2).
  ScalarInterval alpha_range(double x1, double x2, double rho) const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int p = 0; p < pieces_; ++p) {
      const Piece& q = piece_[p];
      const double g1 = x1 * q.c1 + x2 * q.s1;
      const double g2 = x1 * q.c2 + x2 * q.s2;
      const double d1 = x2 * q.c1 - x1 * q.s1;
      const double d2 = x2 * q.c2 - x1 * q.s2;
      double plo = std::min(g1, g2), phi = std::max(g1, g2);
      if (d1 > 0.0 && d2 < 0.0) phi = rho;
      if (d1 < 0.0 && d2 > 0.0) plo = -rho;
      lo = std::min(lo, plo);
      hi = std::max(hi, phi);
    }
    return {lo, hi};
  }

  /// max over beta of a sin(beta) + b cos(beta).
  double beta_max(double a, double b) const {
    const double d1 = a * cb1_ - b * sb1_;
    const double d2 = a * cb2_ - b * sb2_;
    if (d1 > 0.0 && d2 < 0.0) return std::sqrt(a * a + b * b);
    return std::max(a * sb1_ + b * cb1_, a * sb2_ + b * cb2_);
  }
  /// min over beta of a sin(beta) + b cos(beta).
  double beta_min(double a, double b) const {
    const double d1 = a * cb1_ - b * sb1_;
    const double d2 = a * cb2_ - b * sb2_;
    if (d1 < 0.0 && d2 > 0.0) return -std::sqrt(a * a + b * b);
    return std::min(a * sb1_ + b * cb1_, a * sb2_ + b * cb2_);
  }

  ScalarInterval operator()(double x1, double x2, double x3, double rho, double y) const {
    const ScalarInterval g = alpha_range(x1, x2, rho);
    return {y - beta_max(g.hi, x3), y - beta_min(g.lo, x3)};
  }

 private:
  struct Piece {
    double c1, s1, c2, s2;
  };
  void set_piece(int p, double a1, double a2) {
    piece_[p] = {std::cos(a1), std::sin(a1), std::cos(a2), std::sin(a2)};
  }
  Piece piece_[2]{};
  int pieces_ = 1;
  double sb1_, cb1_, sb2_, cb2_;
};

/// Least-squares rigid fit of y ~ R x + t over the masked pairs.
inline PoseEstimate procrustes(const PointPairSet& pairs, const IndexSet& mask) {
  if (mask.size() < 3) throw DegenerateConfiguration("procrustes: fewer than 3 pairs");
  Eigen::Vector3d cx = Eigen::Vector3d::Zero(), cy = Eigen::Vector3d::Zero();
  for (std::size_t i : mask) {
    cx += pairs.x.at(i);
    cy += pairs.y.at(i);
  }
  cx /= static_cast<double>(mask.size());
  cy /= static_cast<double>(mask.size());
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d Sx = Eigen::Matrix3d::Zero();
  for (std::size_t i : mask) {
    const Eigen::Vector3d dx = pairs.x[i] - cx;
    H += dx * (pairs.y[i] - cy).transpose();
    Sx += dx * dx.transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> sx(Sx);
  const auto sv = sx.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
    throw DegenerateConfiguration("procrustes: source points are collinear");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  PoseEstimate pose;
  pose.R = V * D * U.transpose();
  pose.t = cy - pose.R * cx;
  return pose;
}

/// Orthonormal rotation with third row equal to r, so Q r = e_z.
inline Eigen::Matrix3d frame_with_third_axis(const Eigen::Vector3d& r) {
  Eigen::Index k;
  r.cwiseAbs().minCoeff(&k);
  const Eigen::Vector3d seed = Eigen::Vector3d::Unit(k);
  const Eigen::Vector3d u = (seed - r.dot(seed) * r).normalized();
  const Eigen::Vector3d v = r.cross(u);
  Eigen::Matrix3d Q;
  Q.row(0) = u.transpose();
  Q.row(1) = v.transpose();
  Q.row(2) = r.transpose();
  return Q;
}

}  // namespace tear
