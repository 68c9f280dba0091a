#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gsm/correspondence.hpp"
#include "gsm/error.hpp"

namespace gsm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Ordered 3D points with optional per-point unit normals (meters).
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or same length as points

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_normals() const noexcept { return !normals.empty(); }

  void validate() const {
    for (const auto& p : points) {
      if (!p.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite point coordinate");
    }
    if (!normals.empty()) {
      if (normals.size() != points.size())
        throw Error(ErrorCode::InvalidArgument, "normals/points length mismatch");
      for (const auto& n : normals) {
        if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-6)
          throw Error(ErrorCode::InvalidArgument, "normal is not unit length");
      }
    }
  }
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  // (this * other)(p) == this(other(p))
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  bool is_valid(double tol = 1e-9) const {
    return rotation.allFinite() && translation.allFinite() &&
           (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

class InlierThreshold {
 public:
  static constexpr double kIndoor = 0.10;
  static constexpr double kOutdoor = 0.60;

  explicit InlierThreshold(double tau = kIndoor) : tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw Error(ErrorCode::InvalidArgument, "inlier threshold must be positive");
  }
  double tau() const noexcept { return tau_; }

 private:
  double tau_;
};

inline Mat3 rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& xf) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(xf.apply(p));
  out.normals.reserve(cloud.normals.size());
  for (const auto& n : cloud.normals) out.normals.push_back(xf.rotation * n);
  return out;
}

namespace detail {

inline void check_indices(const PointCloud& src, const PointCloud& tgt,
                          std::span<const Correspondence> corr) {
  for (const auto& c : corr) {
    if (c.src >= src.size() || c.tgt >= tgt.size())
      throw Error(ErrorCode::InvalidCorrespondence,
                  "pair (" + std::to_string(c.src) + "," + std::to_string(c.tgt) +
                      ") out of range");
  }
}

// Closed-form least-squares rigid alignment (centroids + SVD of the
// cross-covariance, reflection-corrected). `src_at(i)` / `tgt_at(i)` give the
// i-th pair.
template <typename SrcAt, typename TgtAt>
RigidTransform kabsch(std::size_t count, SrcAt src_at, TgtAt tgt_at) {
  if (count < 3) throw Error(ErrorCode::DegenerateInput, "need at least 3 pairs");
  Vec3 src_mean = Vec3::Zero();
  Vec3 tgt_mean = Vec3::Zero();
  for (std::size_t i = 0; i < count; ++i) {
    src_mean += src_at(i);
    tgt_mean += tgt_at(i);
  }
  src_mean /= static_cast<double>(count);
  tgt_mean /= static_cast<double>(count);

  Mat3 cov = Mat3::Zero();
  double spread = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Vec3 a = src_at(i) - src_mean;
    cov += a * (tgt_at(i) - tgt_mean).transpose();
    spread = std::max(spread, a.squaredNorm());
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank < 2 means the pairs are collinear (or coincident): rotation about
  // the line is unconstrained.
  if (!(sv(0) > 0.0) || sv(1) <= 1e-10 * sv(0) || spread == 0.0)
    throw Error(ErrorCode::DegenerateInput, "rank-deficient cross-covariance");

  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  RigidTransform xf;
  xf.rotation = v * d * u.transpose();
  xf.translation = tgt_mean - xf.rotation * src_mean;
  return xf;
}

}  // namespace detail

// Sum of squared residuals ||R p + t - q||^2 over the correspondences.
inline double alignment_error(const PointCloud& src, const PointCloud& tgt,
                              std::span<const Correspondence> corr, const RigidTransform& xf) {
  detail::check_indices(src, tgt, corr);
  double total = 0.0;
  for (const auto& c : corr) total += (xf.apply(src.points[c.src]) - tgt.points[c.tgt]).squaredNorm();
  return total;
}

inline double alignment_error(const PointCloud& src, const PointCloud& tgt,
                              const CorrespondenceSet& corr, const RigidTransform& xf) {
  return alignment_error(src, tgt, std::span<const Correspondence>(corr.pairs), xf);
}

// Pairs whose residual under `xf_gt` is strictly below tau. Order preserved.
inline CorrespondenceSet inlier_set(const PointCloud& src, const PointCloud& tgt,
                                    const CorrespondenceSet& corr, const RigidTransform& xf_gt,
                                    InlierThreshold thr) {
  detail::check_indices(src, tgt, corr.pairs);
  CorrespondenceSet out;
  out.policy = corr.policy;
  for (const auto& c : corr.pairs) {
    if ((xf_gt.apply(src.points[c.src]) - tgt.points[c.tgt]).norm() < thr.tau())
      out.pairs.push_back(c);
  }
  return out;
}

using PointPair = std::pair<Vec3, Vec3>;

inline RigidTransform estimate_transform_svd(std::span<const PointPair> pairs) {
  return detail::kabsch(
      pairs.size(), [&](std::size_t i) -> const Vec3& { return pairs[i].first; },
      [&](std::size_t i) -> const Vec3& { return pairs[i].second; });
}

inline RigidTransform estimate_transform_svd(const PointCloud& src, const PointCloud& tgt,
                                             std::span<const Correspondence> corr) {
  detail::check_indices(src, tgt, corr);
  return detail::kabsch(
      corr.size(), [&](std::size_t i) -> const Vec3& { return src.points[corr[i].src]; },
      [&](std::size_t i) -> const Vec3& { return tgt.points[corr[i].tgt]; });
}

// Isotropic rotation error in radians: the angle of r_est^T r_gt, equal to
// arccos((trace - 1) / 2). Evaluated as atan2(sin, cos) because arccos loses
// about 8 digits near zero.
inline double rotation_error(const Mat3& r_est, const Mat3& r_gt) {
  const Mat3 m = r_est.transpose() * r_gt;
  const double c = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  return std::atan2(axis.norm() / 2.0, c);
}

inline double translation_error(const Vec3& t_est, const Vec3& t_gt) {
  return (t_est - t_gt).norm();
}

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double rad_to_deg(double r) { return r * 180.0 / kPi; }
inline constexpr double deg_to_rad(double d) { return d * kPi / 180.0; }

}  // namespace gsm
