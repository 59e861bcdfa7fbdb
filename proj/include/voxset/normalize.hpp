// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "voxset/common.hpp"
#include "voxset/geometry.hpp"

namespace voxset {

template <typename Scalar>
struct DepthStats {
  Scalar mean = Scalar(0);
  Scalar stddev = Scalar(0);
};

// A reconstructed capture: sparse point cloud plus the cameras that saw it.
// depth_stats is optional (empty) and feeds only the flat-depth filter.
template <typename Scalar>
struct Sequence {
  std::vector<Vec3<Scalar>> points;
  std::vector<CameraPose<Scalar>> cameras;
  std::vector<DepthStats<Scalar>> depth_stats;
};

template <typename Scalar>
struct NormalizationReport {
  Vec3<Scalar> shift = Vec3<Scalar>::Zero();   // subtracted before rotating
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Scalar scale = Scalar(1);
  bool accepted = false;
  std::string reason;  // empty when accepted

  // The normalization as one similarity transform: p -> scale * rotation *
  // (p - shift). Camera extrinsics transform so reprojections are unchanged.
  Vec3<Scalar> apply(const Vec3<Scalar>& p) const {
    return scale * (rotation * (p - shift));
  }
};

// Shifts the world by -v: points move, camera translations absorb R*v so
// every reprojection is unchanged.
template <typename Scalar>
Sequence<Scalar> shift_sequence(const Sequence<Scalar>& seq,
                                const Vec3<Scalar>& v) {
  Sequence<Scalar> out = seq;
  for (auto& p : out.points) p -= v;
  for (auto& cam : out.cameras) cam.translation += cam.rotation * v;
  return out;
}

// Rotates the world by Q: points move, camera rotations absorb Q^T.
template <typename Scalar>
Sequence<Scalar> rotate_sequence(const Sequence<Scalar>& seq,
                                 const Mat3<Scalar>& q) {
  Sequence<Scalar> out = seq;
  for (auto& p : out.points) p = q * p;
  for (auto& cam : out.cameras) cam.rotation = cam.rotation * q.transpose();
  return out;
}

// Scales the world uniformly: points and camera centers scale together
// (T = -R c scales with c), leaving reprojections unchanged.
template <typename Scalar>
Sequence<Scalar> scale_sequence(const Sequence<Scalar>& seq, Scalar s) {
  Sequence<Scalar> out = seq;
  for (auto& p : out.points) p *= s;
  for (auto& cam : out.cameras) cam.translation *= s;
  return out;
}

// Moves the point cloud's center of mass to the origin. Returns the shifted
// sequence and the centroid that was subtracted.
template <typename Scalar>
std::pair<Sequence<Scalar>, Vec3<Scalar>> center_translation(
    const Sequence<Scalar>& seq) {
  require(!seq.points.empty(), "center_translation: empty point cloud");
  Vec3<Scalar> centroid = Vec3<Scalar>::Zero();
  for (const auto& p : seq.points) centroid += p;
  centroid /= Scalar(seq.points.size());
  return {shift_sequence(seq, centroid), centroid};
}

template <typename Scalar>
struct UpEstimate {
  Vec3<Scalar> up = Vec3<Scalar>::Zero();
  Vec3<Scalar> singular_values = Vec3<Scalar>::Zero();  // descending
  bool ok = false;
  std::string reason;  // y_inconsistent | svd_ratio when !ok
};

// Estimates the world up direction from the photographer's bias: people
// keep the camera's x-axis roughly horizontal, so the camera x-axes span
// the horizontal plane and the direction they avoid is up. Stacks the
// world-frame camera x-axes, removes their mean, and takes the right
// singular vector of the smallest singular value. The sign is fixed against
// the first camera's y-axis. Fails (ok = false) when some camera's y-axis
// opposes the first camera's, or when the singular-value profile looks
// nothing like a horizontal disc (sigma1^2/sigma2^2 >= sigma2^2/sigma3^2).
template <typename Scalar>
UpEstimate<Scalar> estimate_up(const Sequence<Scalar>& seq) {
  const int n = static_cast<int>(seq.cameras.size());
  require(n >= 3, "estimate_up: needs at least 3 cameras");
  const Vec3<Scalar> y_ref = seq.cameras[0].rotation.row(1).transpose();
  UpEstimate<Scalar> est;
  for (int i = 1; i < n; ++i) {
    const Vec3<Scalar> y_i =
        seq.cameras[static_cast<size_t>(i)].rotation.row(1).transpose();
    if (y_ref.dot(y_i) <= Scalar(0)) {
      est.reason = "y_inconsistent";
      return est;
    }
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> axes(n, 3);
  for (int i = 0; i < n; ++i) {
    axes.row(i) = seq.cameras[static_cast<size_t>(i)].rotation.row(0);
  }
  axes.rowwise() -= axes.colwise().mean();
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, 3>> svd(
      axes, Eigen::ComputeFullV);
  const Vec3<Scalar> sv = svd.singularValues();
  est.singular_values = sv;
  require(sv[1] > Scalar(1e-12) * std::max(sv[0], Scalar(1)),
          "estimate_up: camera x-axes are collinear");
  // Disc-shaped spread: the plane directions must dominate the normal much
  // more than they differ from each other. Cross-multiplied to stay defined
  // when the smallest singular value is exactly zero.
  if (sv[0] * sv[0] * (sv[2] * sv[2]) >=
      (sv[1] * sv[1]) * (sv[1] * sv[1])) {
    est.reason = "svd_ratio";
    return est;
  }
  Vec3<Scalar> up = svd.matrixV().col(2);
  if (up.dot(y_ref) < Scalar(0)) up = -up;
  est.up = up;
  est.ok = true;
  return est;
}

// Rotation with the fewest turns taking `from` to `to` (both unit).
template <typename Scalar>
Mat3<Scalar> rotation_between(const Vec3<Scalar>& from,
                              const Vec3<Scalar>& to) {
  const Vec3<Scalar> axis = from.cross(to);
  const Scalar sin_a = axis.norm();
  const Scalar cos_a = from.dot(to);
  if (sin_a < Scalar(1e-12)) {
    if (cos_a > Scalar(0)) return Mat3<Scalar>::Identity();
    // Antipodal: rotate half a turn about any perpendicular axis.
    Vec3<Scalar> perp = from.cross(Vec3<Scalar>(1, 0, 0));
    if (perp.norm() < Scalar(1e-6)) {
      perp = from.cross(Vec3<Scalar>(0, 1, 0));
    }
    perp.normalize();
    return Eigen::AngleAxis<Scalar>(Scalar(EIGEN_PI), perp)
        .toRotationMatrix();
  }
  return Eigen::AngleAxis<Scalar>(std::atan2(sin_a, cos_a),
                                  Vec3<Scalar>(axis / sin_a))
      .toRotationMatrix();
}

// Centers the cloud vertically (midpoint of the y-range to 0) and scales
// everything so the largest point infinity-norm becomes d*0.95/2, leaving
// a 5% margin inside a grid cube of side d. Returns the scale applied.
template <typename Scalar>
std::pair<Sequence<Scalar>, Scalar> vertical_recenter_and_scale(
    const Sequence<Scalar>& seq, Scalar d = Scalar(1.2)) {
  require(!seq.points.empty(), "vertical_recenter_and_scale: empty cloud");
  Scalar y_min = seq.points[0].y();
  Scalar y_max = y_min;
  for (const auto& p : seq.points) {
    y_min = std::min(y_min, p.y());
    y_max = std::max(y_max, p.y());
  }
  Sequence<Scalar> out = shift_sequence(
      seq, Vec3<Scalar>(Scalar(0), (y_min + y_max) / Scalar(2), Scalar(0)));
  Scalar max_inf = Scalar(0);
  for (const auto& p : out.points) {
    max_inf = std::max(max_inf, p.template lpNorm<Eigen::Infinity>());
  }
  require(max_inf > Scalar(0),
          "vertical_recenter_and_scale: all points coincide at the origin");
  const Scalar s = d * Scalar(0.95) / (Scalar(2) * max_inf);
  return {scale_sequence(out, s), s};
}

template <typename Scalar>
struct FilterConfig {
  Scalar min_camera_distance = Scalar(0.85);
  Scalar max_camera_distance = Scalar(6.5);
  // A view is "flat" when its depth spread is below this fraction of its
  // mean depth; flat sequences are likely screen captures.
  Scalar depth_std_factor = Scalar(0.05);
};

template <typename Scalar>
struct FilterVerdict {
  bool accepted = false;
  std::string reason;
};

// Accept/reject a normalized sequence. Camera distance uses the extrinsic
// translation magnitude; the documented thresholds themselves are accepted
// (rejection is strict inequality). Up-diagnostics failures are folded in
// when the caller passes them.
template <typename Scalar>
FilterVerdict<Scalar> filter_sequence(const Sequence<Scalar>& seq,
                                      const FilterConfig<Scalar>& cfg = {}) {
  FilterVerdict<Scalar> verdict;
  for (const auto& cam : seq.cameras) {
    const Scalar dist = cam.translation.norm();
    if (dist < cfg.min_camera_distance) {
      verdict.reason = "too_close";
      return verdict;
    }
    if (dist > cfg.max_camera_distance) {
      verdict.reason = "too_far";
      return verdict;
    }
  }
  if (!seq.depth_stats.empty()) {
    for (const auto& ds : seq.depth_stats) {
      if (ds.stddev < cfg.depth_std_factor * ds.mean) {
        verdict.reason = "flat_depth";
        return verdict;
      }
    }
  }
  verdict.accepted = true;
  return verdict;
}

// Full pipeline: center -> estimate up -> align -> vertical recenter and
// scale -> filter. The report composes the three transforms into a single
// similarity p -> s * Q * (p - shift) that reproduces the output exactly.
template <typename Scalar>
std::pair<Sequence<Scalar>, NormalizationReport<Scalar>> normalize_sequence(
    const Sequence<Scalar>& seq, Scalar d = Scalar(1.2),
    const FilterConfig<Scalar>& cfg = {}) {
  NormalizationReport<Scalar> report;
  auto [centered, centroid] = center_translation(seq);
  const UpEstimate<Scalar> up = estimate_up(centered);
  if (!up.ok) {
    report.reason = up.reason;
    return {centered, report};
  }
  const Mat3<Scalar> q =
      rotation_between(up.up, Vec3<Scalar>(Scalar(0), Scalar(1), Scalar(0)));
  Sequence<Scalar> aligned = rotate_sequence(centered, q);
  Scalar y_min = aligned.points[0].y();
  Scalar y_max = y_min;
  for (const auto& p : aligned.points) {
    y_min = std::min(y_min, p.y());
    y_max = std::max(y_max, p.y());
  }
  const Vec3<Scalar> v(Scalar(0), (y_min + y_max) / Scalar(2), Scalar(0));
  auto [scaled, s] = vertical_recenter_and_scale(aligned, d);
  const FilterVerdict<Scalar> verdict = filter_sequence(scaled, cfg);
  report.shift = centroid + q.transpose() * v;
  report.rotation = q;
  report.scale = s;
  report.accepted = verdict.accepted;
  report.reason = verdict.reason;
  return {scaled, report};
}

}  // namespace voxset
