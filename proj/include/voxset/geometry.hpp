// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "voxset/common.hpp"
#include "voxset/image.hpp"

namespace voxset {

// World-to-camera pose plus intrinsics in normalized device coordinates.
// Camera frame is right-handed with x to the image right, y up, and the view
// direction along -z. NDC runs over [0,1] x [0,1] with u rightward and v
// downward, so intrinsics are resolution independent: a pixel (row, col) at
// size (H, W) sits at NDC ((col+0.5)/W, (row+0.5)/H).
template <typename Scalar>
struct CameraPose {
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();  // world -> camera
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();
  Mat3<Scalar> intrinsics = default_intrinsics();

  static Mat3<Scalar> default_intrinsics() {
    return make_intrinsics(Scalar(1), Scalar(1), Scalar(0.5), Scalar(0.5));
  }

  static Mat3<Scalar> make_intrinsics(Scalar fx, Scalar fy, Scalar cx,
                                      Scalar cy) {
    Mat3<Scalar> k = Mat3<Scalar>::Zero();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    k(2, 2) = Scalar(1);
    return k;
  }

  Scalar focal_x() const { return intrinsics(0, 0); }
  Scalar focal_y() const { return intrinsics(1, 1); }
  Scalar principal_x() const { return intrinsics(0, 2); }
  Scalar principal_y() const { return intrinsics(1, 2); }
};

template <typename Scalar>
void validate_pose(const CameraPose<Scalar>& pose) {
  const Mat3<Scalar> rtr =
      pose.rotation.transpose() * pose.rotation - Mat3<Scalar>::Identity();
  require(rtr.cwiseAbs().maxCoeff() < Scalar(1e-6),
          "CameraPose: rotation is not orthonormal");
  require(std::abs(pose.rotation.determinant() - Scalar(1)) < Scalar(1e-6),
          "CameraPose: rotation determinant is not +1");
  require(pose.focal_x() > Scalar(0) && pose.focal_y() > Scalar(0),
          "CameraPose: focal lengths must be positive");
  const Mat3<Scalar>& k = pose.intrinsics;
  const bool off_zero = k(0, 1) == Scalar(0) && k(1, 0) == Scalar(0) &&
                        k(2, 0) == Scalar(0) && k(2, 1) == Scalar(0) &&
                        k(2, 2) == Scalar(1);
  require(off_zero, "CameraPose: intrinsics must be zero off the focal/principal entries");
}

template <typename Scalar>
struct Ray {
  Vec3<Scalar> origin;
  Vec3<Scalar> direction;  // unit norm
};

// Continuous pixel coordinates of a projected world point. `behind` is set
// (and row/col are meaningless) when the camera-frame depth is <= 0; callers
// such as unprojection treat that as padding rather than an error.
template <typename Scalar>
struct PixelProjection {
  Scalar row = Scalar(0);
  Scalar col = Scalar(0);
  Scalar depth = Scalar(0);
  bool behind = true;
};

template <typename Scalar>
Vec3<Scalar> camera_center(const CameraPose<Scalar>& pose) {
  return -(pose.rotation.transpose() * pose.translation);
}

template <typename Scalar>
Vec3<Scalar> world_to_camera(const CameraPose<Scalar>& pose,
                             const Vec3<Scalar>& point) {
  return pose.rotation * point + pose.translation;
}

template <typename Scalar>
Ray<Scalar> ray_for_pixel(const CameraPose<Scalar>& pose, Scalar row,
                          Scalar col, int height, int width) {
  const Scalar u = (col + Scalar(0.5)) / Scalar(width);
  const Scalar v = (row + Scalar(0.5)) / Scalar(height);
  Vec3<Scalar> dir_cam((u - pose.principal_x()) / pose.focal_x(),
                       -(v - pose.principal_y()) / pose.focal_y(), Scalar(-1));
  Vec3<Scalar> dir_world = pose.rotation.transpose() * dir_cam;
  dir_world.normalize();
  return Ray<Scalar>{camera_center(pose), dir_world};
}

template <typename Scalar>
Ray<Scalar> ray_for_pixel(const CameraPose<Scalar>& pose, int row, int col,
                          int height, int width) {
  return ray_for_pixel(pose, Scalar(row), Scalar(col), height, width);
}

template <typename Scalar>
PixelProjection<Scalar> project(const CameraPose<Scalar>& pose,
                                const Vec3<Scalar>& point, int height,
                                int width) {
  const Vec3<Scalar> cam = world_to_camera(pose, point);
  const Scalar depth = -cam.z();
  PixelProjection<Scalar> out;
  out.depth = depth;
  if (depth <= Scalar(0)) {
    out.behind = true;
    return out;
  }
  out.behind = false;
  const Scalar u = pose.principal_x() + pose.focal_x() * (cam.x() / depth);
  const Scalar v = pose.principal_y() - pose.focal_y() * (cam.y() / depth);
  out.col = u * Scalar(width) - Scalar(0.5);
  out.row = v * Scalar(height) - Scalar(0.5);
  return out;
}

// 6-channel per-pixel map: channels 0-2 hold the camera origin in world
// coordinates (constant over the image), channels 3-5 the unit ray direction
// in world coordinates. Meant to be concatenated to RGB along channels.
template <typename Scalar>
Image<Scalar> pose_encode(const CameraPose<Scalar>& pose, int height,
                          int width) {
  Image<Scalar> out(height, width, 6);
  const Vec3<Scalar> origin = camera_center(pose);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const Ray<Scalar> ray = ray_for_pixel(pose, r, c, height, width);
      auto px = out.pixel(r, c);
      px(0) = origin.x();
      px(1) = origin.y();
      px(2) = origin.z();
      px(3) = ray.direction.x();
      px(4) = ray.direction.y();
      px(5) = ray.direction.z();
    }
  }
  return out;
}

// Pose with the camera at `center` looking at `target`, world up hint +y.
template <typename Scalar>
CameraPose<Scalar> look_at(const Vec3<Scalar>& center,
                           const Vec3<Scalar>& target, Scalar focal_x,
                           Scalar focal_y,
                           const Vec3<Scalar>& up = Vec3<Scalar>(0, 1, 0)) {
  Vec3<Scalar> backward = (center - target).normalized();  // camera +z
  Vec3<Scalar> right = up.cross(backward);
  require(right.norm() > Scalar(1e-12),
          "look_at: view direction parallel to up");
  right.normalize();
  const Vec3<Scalar> cam_up = backward.cross(right);
  CameraPose<Scalar> pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = cam_up.transpose();
  pose.rotation.row(2) = backward.transpose();
  pose.translation = -(pose.rotation * center);
  pose.intrinsics = CameraPose<Scalar>::make_intrinsics(
      focal_x, focal_y, Scalar(0.5), Scalar(0.5));
  return pose;
}

}  // namespace voxset
