// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <voxset/geometry.hpp>
#include <voxset/rng.hpp>

#include <Eigen/Geometry>
#include <cmath>

using voxset::CameraPose;
using voxset::Ray;
using voxset::Rng;

namespace {

voxset::Mat3<double> random_rotation(Rng& rng) {
  voxset::Vec3<double> axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

CameraPose<double> random_pose(Rng& rng) {
  CameraPose<double> pose;
  pose.rotation = random_rotation(rng);
  pose.translation =
      voxset::Vec3<double>(rng.normal(), rng.normal(), rng.normal());
  pose.intrinsics = CameraPose<double>::make_intrinsics(
      rng.uniform(0.6, 2.0), rng.uniform(0.6, 2.0), rng.uniform(0.3, 0.7),
      rng.uniform(0.3, 0.7));
  return pose;
}

}  // namespace

TEST_CASE("camera_center inverts the world-to-camera translation") {
  CameraPose<double> pose;
  CHECK(voxset::camera_center(pose).norm() == 0.0);
  pose.translation = voxset::Vec3<double>(0, 0, -2);
  CHECK((voxset::camera_center(pose) - voxset::Vec3<double>(0, 0, 2)).norm() ==
        0.0);
}

TEST_CASE("camera center maps to the camera-frame origin") {
  Rng rng(101);
  for (int i = 0; i < 20; ++i) {
    const CameraPose<double> pose = random_pose(rng);
    const voxset::Vec3<double> c = voxset::camera_center(pose);
    CHECK(voxset::world_to_camera(pose, c).norm() < 1e-9);
  }
}

TEST_CASE("validate_pose accepts well-formed poses and rejects broken ones") {
  Rng rng(102);
  CameraPose<double> pose = random_pose(rng);
  CHECK_NOTHROW(voxset::validate_pose(pose));

  CameraPose<double> scaled = pose;
  scaled.rotation *= 1.01;
  CHECK_THROWS_AS(voxset::validate_pose(scaled), std::invalid_argument);

  CameraPose<double> mirrored = pose;
  mirrored.rotation.row(0) *= -1.0;  // orthonormal but det = -1
  CHECK_THROWS_AS(voxset::validate_pose(mirrored), std::invalid_argument);

  CameraPose<double> bad_focal = pose;
  bad_focal.intrinsics(0, 0) = -1.0;
  CHECK_THROWS_AS(voxset::validate_pose(bad_focal), std::invalid_argument);

  CameraPose<double> skewed = pose;
  skewed.intrinsics(0, 1) = 0.1;
  CHECK_THROWS_AS(voxset::validate_pose(skewed), std::invalid_argument);
}

TEST_CASE("principal ray of an axis-aligned camera") {
  // Camera at (0,0,2), identity rotation, so it views along world -z.
  CameraPose<double> pose;
  pose.translation = voxset::Vec3<double>(0, 0, -2);
  const int hw = 17;  // odd size puts the principal point on a pixel center
  const Ray<double> ray = voxset::ray_for_pixel(pose, 8, 8, hw, hw);
  CHECK((ray.origin - voxset::Vec3<double>(0, 0, 2)).norm() < 1e-12);
  CHECK((ray.direction - voxset::Vec3<double>(0, 0, -1)).norm() < 1e-12);
}

TEST_CASE("rays mirror across the principal axis") {
  CameraPose<double> pose;
  pose.translation = voxset::Vec3<double>(0, 0, -2);
  const int hw = 16;
  for (int c = 0; c < hw; ++c) {
    const Ray<double> a = voxset::ray_for_pixel(pose, 3, c, hw, hw);
    const Ray<double> b = voxset::ray_for_pixel(pose, 3, hw - 1 - c, hw, hw);
    CHECK(a.direction.x() == doctest::Approx(-b.direction.x()).epsilon(1e-12));
    CHECK(a.direction.y() == doctest::Approx(b.direction.y()).epsilon(1e-12));
    CHECK(a.direction.z() == doctest::Approx(b.direction.z()).epsilon(1e-12));
  }
}

TEST_CASE("ray directions are unit length") {
  Rng rng(103);
  const CameraPose<double> pose = random_pose(rng);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 9; ++c)
      CHECK(voxset::ray_for_pixel(pose, r, c, 7, 9).direction.norm() ==
            doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("project returns the pixel its ray was cast through") {
  Rng rng(104);
  const int height = 9, width = 7;
  for (int trial = 0; trial < 5; ++trial) {
    const CameraPose<double> pose = random_pose(rng);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const Ray<double> ray = voxset::ray_for_pixel(pose, r, c, height, width);
        for (double t : {0.5, 1.0, 3.0}) {
          const voxset::Vec3<double> p = ray.origin + t * ray.direction;
          const auto px = voxset::project(pose, p, height, width);
          REQUIRE(!px.behind);
          CHECK(std::abs(px.row - double(r)) < 1e-4);
          CHECK(std::abs(px.col - double(c)) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("points on the principal axis project to the principal point") {
  CameraPose<double> pose;
  pose.translation = voxset::Vec3<double>(0, 0, -2);
  const auto px = voxset::project(pose, voxset::Vec3<double>(0, 0, 0), 16, 16);
  REQUIRE(!px.behind);
  CHECK(px.row == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(px.col == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(px.depth == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("points behind the camera report the behind flag") {
  CameraPose<double> pose;
  pose.translation = voxset::Vec3<double>(0, 0, -2);
  CHECK(voxset::project(pose, voxset::Vec3<double>(0, 0, 5), 16, 16).behind);
  CHECK(voxset::project(pose, voxset::Vec3<double>(0, 0, 2), 16, 16).behind);
  CHECK(!voxset::project(pose, voxset::Vec3<double>(0, 0, 1.9), 16, 16).behind);
}

TEST_CASE("pose encoding carries the origin and unit ray directions") {
  CameraPose<double> pose;
  pose.translation = voxset::Vec3<double>(0, 0, -2);
  const voxset::Image<double> enc = voxset::pose_encode(pose, 17, 17);
  REQUIRE(enc.values.cols() == 6);

  // Channels 0-2 are the camera origin at every pixel.
  for (int r = 0; r < 17; ++r) {
    for (int c = 0; c < 17; ++c) {
      CHECK(enc(r, c, 0) == 0.0);
      CHECK(enc(r, c, 1) == 0.0);
      CHECK(enc(r, c, 2) == 2.0);
      const double norm = std::sqrt(enc(r, c, 3) * enc(r, c, 3) +
                                    enc(r, c, 4) * enc(r, c, 4) +
                                    enc(r, c, 5) * enc(r, c, 5));
      CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  // Principal pixel looks straight down the view axis.
  CHECK(enc(8, 8, 3) == doctest::Approx(0.0));
  CHECK(enc(8, 8, 4) == doctest::Approx(0.0));
  CHECK(enc(8, 8, 5) == doctest::Approx(-1.0));
}

TEST_CASE("pose encoding directions depend only on the NDC location") {
  Rng rng(105);
  const CameraPose<double> pose = random_pose(rng);
  const voxset::Image<double> lo = voxset::pose_encode(pose, 16, 16);
  const voxset::Image<double> hi = voxset::pose_encode(pose, 48, 48);
  // Pixel (r,c) at 16^2 and (3r+1, 3c+1) at 48^2 share the same pixel center.
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      for (int ch = 3; ch < 6; ++ch)
        CHECK(lo(r, c, ch) ==
              doctest::Approx(hi(3 * r + 1, 3 * c + 1, ch)).epsilon(1e-6));
}

TEST_CASE("look_at builds a valid pose aimed at the target") {
  Rng rng(106);
  for (int i = 0; i < 10; ++i) {
    const voxset::Vec3<double> center(rng.uniform(-3.0, 3.0),
                                      rng.uniform(-1.0, 1.0),
                                      rng.uniform(-3.0, 3.0));
    const voxset::Vec3<double> target(rng.uniform(-0.2, 0.2),
                                      rng.uniform(-0.2, 0.2),
                                      rng.uniform(-0.2, 0.2));
    if ((center - target).norm() < 0.5) continue;
    const CameraPose<double> pose =
        voxset::look_at(center, target, 1.1, 1.1);
    CHECK_NOTHROW(voxset::validate_pose(pose));
    CHECK((voxset::camera_center(pose) - center).norm() < 1e-12);
    const auto px = voxset::project(pose, target, 32, 32);
    REQUIRE(!px.behind);
    CHECK(px.row == doctest::Approx(15.5).epsilon(1e-9));
    CHECK(px.col == doctest::Approx(15.5).epsilon(1e-9));
    // World up has a non-negative component along camera up.
    CHECK(pose.rotation(1, 1) >= 0.0);
  }
}
