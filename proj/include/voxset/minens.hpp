// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "voxset/common.hpp"
#include "voxset/field.hpp"
#include "voxset/geometry.hpp"
#include "voxset/image.hpp"
#include "voxset/rng.hpp"
#include "voxset/viewset.hpp"

namespace voxset {
namespace minens {

// The character is built from 1/32-unit blocks and spans y in [-0.5, 0.5]
// at rest; cameras orbit at kCameraRadius looking at the origin.
template <typename Scalar> constexpr Scalar kUnit = Scalar(1) / Scalar(32);
inline constexpr double kCameraRadius = 2.0;
inline constexpr double kFocal = 1.1;

template <typename Scalar>
struct Articulation {
  // Angles in degrees. Index 0 = left (+x side), 1 = right.
  std::array<Scalar, 2> arm_pitch{};
  std::array<Scalar, 2> arm_roll{};
  std::array<Scalar, 2> leg_pitch{};
  std::array<Scalar, 2> leg_roll{};
  Scalar head_pitch = Scalar(0);
  Scalar head_roll = Scalar(0);
  Scalar head_yaw = Scalar(0);
};

// Base color per body part.
enum Part : int {
  kHead = 0,
  kTorso = 1,
  kArmLeft = 2,
  kArmRight = 3,
  kLegLeft = 4,
  kLegRight = 5,
};
inline constexpr int kPartCount = 6;

template <typename Scalar>
using Skin = std::array<Vec3<Scalar>, kPartCount>;

// Oriented box: world = center + rotation * local, |local| <= half.
// face_colors are indexed in the local frame: +x, -x, +y, -y, +z, -z.
template <typename Scalar>
struct Cuboid {
  Vec3<Scalar> center;
  Vec3<Scalar> half;
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  std::array<Vec3<Scalar>, 6> face_colors;
};

// Flat-shading factors per local face (+x, -x, top, bottom, front +z,
// back -z) applied to a part's base color.
template <typename Scalar>
constexpr std::array<Scalar, 6> kFaceShade = {
    Scalar(0.9), Scalar(0.85), Scalar(1.0),
    Scalar(0.7), Scalar(0.95), Scalar(0.8)};

template <typename Scalar>
struct PartSpec {
  Vec3<Scalar> center;  // rest pose
  Vec3<Scalar> half;
  Vec3<Scalar> pivot;   // joint the part rotates about (torso: its center)
};

// Rest-pose layout, in character frame: facing +z, up +y, left = +x.
// Head 8x8x8 blocks, torso 8x12x4, limbs 4x12x4, all in 1/32 units,
// vertically centered so the figure spans y in [-0.5, 0.5].
template <typename Scalar>
std::array<PartSpec<Scalar>, kPartCount> character_layout() {
  const Scalar u = kUnit<Scalar>;
  auto v = [u](Scalar x, Scalar y, Scalar z) {
    return Vec3<Scalar>(x * u, y * u, z * u);
  };
  std::array<PartSpec<Scalar>, kPartCount> parts;
  parts[kHead] = {v(0, 12, 0), v(4, 4, 4), v(0, 8, 0)};
  parts[kTorso] = {v(0, 2, 0), v(4, 6, 2), v(0, 2, 0)};
  parts[kArmLeft] = {v(6, 2, 0), v(2, 6, 2), v(6, 8, 0)};
  parts[kArmRight] = {v(-6, 2, 0), v(2, 6, 2), v(-6, 8, 0)};
  parts[kLegLeft] = {v(2, -10, 0), v(2, 6, 2), v(2, -4, 0)};
  parts[kLegRight] = {v(-2, -10, 0), v(2, 6, 2), v(-2, -4, 0)};
  return parts;
}

template <typename Scalar>
Mat3<Scalar> rot_x(Scalar degrees) {
  return Eigen::AngleAxis<Scalar>(degrees * Scalar(EIGEN_PI) / Scalar(180),
                                  Vec3<Scalar>::UnitX())
      .toRotationMatrix();
}
template <typename Scalar>
Mat3<Scalar> rot_y(Scalar degrees) {
  return Eigen::AngleAxis<Scalar>(degrees * Scalar(EIGEN_PI) / Scalar(180),
                                  Vec3<Scalar>::UnitY())
      .toRotationMatrix();
}
template <typename Scalar>
Mat3<Scalar> rot_z(Scalar degrees) {
  return Eigen::AngleAxis<Scalar>(degrees * Scalar(EIGEN_PI) / Scalar(180),
                                  Vec3<Scalar>::UnitZ())
      .toRotationMatrix();
}

// Joint rotation of one part. Limbs roll about z (sideways swing) after
// pitching about x (forward/back swing); the head yaws, then pitches, then
// rolls. The torso never moves.
template <typename Scalar>
Mat3<Scalar> part_rotation(int part, const Articulation<Scalar>& art) {
  switch (part) {
    case kHead:
      return rot_y(art.head_yaw) * rot_x(art.head_pitch) *
             rot_z(art.head_roll);
    case kTorso:
      return Mat3<Scalar>::Identity();
    case kArmLeft:
      return rot_z(art.arm_roll[0]) * rot_x(art.arm_pitch[0]);
    case kArmRight:
      return rot_z(art.arm_roll[1]) * rot_x(art.arm_pitch[1]);
    case kLegLeft:
      return rot_z(art.leg_roll[0]) * rot_x(art.leg_pitch[0]);
    case kLegRight:
      return rot_z(art.leg_roll[1]) * rot_x(art.leg_pitch[1]);
    default:
      require(false, "part_rotation: unknown part");
      return Mat3<Scalar>::Identity();
  }
}

// Assembles the posed character: each part's cuboid is rotated about its
// joint pivot, which therefore stays fixed — limbs remain attached.
template <typename Scalar>
std::vector<Cuboid<Scalar>> build_character(const Articulation<Scalar>& art,
                                            const Skin<Scalar>& skin) {
  const auto layout = character_layout<Scalar>();
  std::vector<Cuboid<Scalar>> cuboids(kPartCount);
  for (int part = 0; part < kPartCount; ++part) {
    const PartSpec<Scalar>& spec = layout[static_cast<size_t>(part)];
    const Mat3<Scalar> rot = part_rotation(part, art);
    Cuboid<Scalar>& box = cuboids[static_cast<size_t>(part)];
    box.center = spec.pivot + rot * (spec.center - spec.pivot);
    box.half = spec.half;
    box.rotation = rot;
    for (int face = 0; face < 6; ++face) {
      box.face_colors[static_cast<size_t>(face)] =
          kFaceShade<Scalar>[static_cast<size_t>(face)] *
          skin[static_cast<size_t>(part)];
    }
  }
  return cuboids;
}

// Camera on the orbit sphere: azimuth 0 puts it on the +x axis, azimuth
// grows toward +z, elevation tilts toward +y. Always looks at the origin.
template <typename Scalar>
CameraPose<Scalar> camera_at(Scalar azimuth, Scalar elevation) {
  const Scalar r = Scalar(kCameraRadius);
  const Vec3<Scalar> center(r * std::cos(elevation) * std::cos(azimuth),
                            r * std::sin(elevation),
                            r * std::cos(elevation) * std::sin(azimuth));
  return look_at(center, Vec3<Scalar>(0, 0, 0), Scalar(kFocal),
                 Scalar(kFocal));
}

// Azimuth ~ U[0, 2pi), elevation ~ U[-pi/8, pi/8].
template <typename Scalar>
CameraPose<Scalar> sample_camera(Rng& rng) {
  const Scalar two_pi = Scalar(8) * std::atan(Scalar(1));
  const Scalar eighth_pi = std::atan(Scalar(1)) / Scalar(2);
  const Scalar azimuth = Scalar(rng.uniform(0.0, double(two_pi)));
  const Scalar elevation =
      Scalar(rng.uniform(-double(eighth_pi), double(eighth_pi)));
  return camera_at(azimuth, elevation);
}

// Draws in a fixed order (arms, legs, head; left before right; pitch
// before roll) so articulation sampling is part of the byte-reproducibility
// contract.
template <typename Scalar>
Articulation<Scalar> sample_articulation(Rng& rng) {
  Articulation<Scalar> art;
  art.arm_pitch[0] = Scalar(rng.uniform(-20.0, 45.0));
  art.arm_pitch[1] = Scalar(rng.uniform(-20.0, 45.0));
  art.arm_roll[0] = Scalar(rng.uniform(0.0, 10.0));
  art.arm_roll[1] = Scalar(rng.uniform(-10.0, 0.0));
  art.leg_pitch[0] = Scalar(rng.uniform(-30.0, 30.0));
  art.leg_pitch[1] = Scalar(rng.uniform(-30.0, 30.0));
  art.leg_roll[0] = Scalar(rng.uniform(0.0, 10.0));
  art.leg_roll[1] = Scalar(rng.uniform(-10.0, 0.0));
  art.head_pitch = Scalar(rng.uniform(-10.0, 10.0));
  art.head_roll = Scalar(rng.uniform(-5.0, 5.0));
  art.head_yaw = Scalar(rng.normal(10.0, 10.0));
  return art;
}

// Per-part base colors, kept away from the extremes so shading stays
// visible against any background.
template <typename Scalar>
Skin<Scalar> sample_skin(Rng& rng) {
  Skin<Scalar> skin;
  for (int part = 0; part < kPartCount; ++part) {
    for (int ch = 0; ch < 3; ++ch) {
      skin[static_cast<size_t>(part)][ch] =
          Scalar(rng.uniform(0.15, 0.95));
    }
  }
  return skin;
}

// Background bytes uniform over 0..255 per channel, stored as value/255.
template <typename Scalar>
Vec3<Scalar> sample_background(Rng& rng) {
  Vec3<Scalar> bg;
  for (int ch = 0; ch < 3; ++ch) {
    bg[ch] = Scalar(rng.uniform_int(256)) / Scalar(255);
  }
  return bg;
}

template <typename Scalar>
struct CuboidHit {
  Scalar t;
  int cuboid;
  int face;  // local face index, +x,-x,+y,-y,+z,-z
};

// Nearest forward intersection of the ray with any cuboid, via the slab
// test in each box's local frame. The entry face is the slab that produced
// the latest entry time.
template <typename Scalar>
std::optional<CuboidHit<Scalar>> ray_character_hit(
    const std::vector<Cuboid<Scalar>>& cuboids, const Ray<Scalar>& ray) {
  std::optional<CuboidHit<Scalar>> best;
  for (int b = 0; b < static_cast<int>(cuboids.size()); ++b) {
    const Cuboid<Scalar>& box = cuboids[static_cast<size_t>(b)];
    const Vec3<Scalar> o = box.rotation.transpose() * (ray.origin - box.center);
    const Vec3<Scalar> d = box.rotation.transpose() * ray.direction;
    Scalar t_enter = Scalar(0);
    Scalar t_exit = std::numeric_limits<Scalar>::infinity();
    int enter_axis = -1;
    bool enter_negative_dir = false;
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      const Scalar h = box.half[axis];
      if (std::abs(d[axis]) < Scalar(1e-12)) {
        if (std::abs(o[axis]) > h) miss = true;
        continue;
      }
      Scalar ta = (-h - o[axis]) / d[axis];
      Scalar tb = (h - o[axis]) / d[axis];
      if (ta > tb) std::swap(ta, tb);
      if (ta > t_enter) {
        t_enter = ta;
        enter_axis = axis;
        enter_negative_dir = d[axis] < Scalar(0);
      }
      t_exit = std::min(t_exit, tb);
    }
    if (miss || enter_axis < 0 || t_enter > t_exit ||
        t_enter <= Scalar(1e-9)) {
      continue;
    }
    if (!best || t_enter < best->t) {
      // Moving along -axis you strike the +axis face, and vice versa.
      const int face = 2 * enter_axis + (enter_negative_dir ? 0 : 1);
      best = CuboidHit<Scalar>{t_enter, b, face};
    }
  }
  return best;
}

// Flat-shaded ray-cast render: RGBA, alpha 1 where the character is hit and
// 0 on background pixels (RGB there is the background color).
template <typename Scalar>
Image<Scalar> render_character(const std::vector<Cuboid<Scalar>>& cuboids,
                               const CameraPose<Scalar>& pose, int height,
                               int width, const Vec3<Scalar>& background) {
  Image<Scalar> img(height, width, 4);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const Ray<Scalar> ray = ray_for_pixel(pose, r, c, height, width);
      const auto hit = ray_character_hit(cuboids, ray);
      auto px = img.pixel(r, c);
      if (hit) {
        const Vec3<Scalar>& rgb =
            cuboids[static_cast<size_t>(hit->cuboid)]
                .face_colors[static_cast<size_t>(hit->face)];
        px(0) = rgb[0];
        px(1) = rgb[1];
        px(2) = rgb[2];
        px(3) = Scalar(1);
      } else {
        px(0) = background[0];
        px(1) = background[1];
        px(2) = background[2];
        px(3) = Scalar(0);
      }
    }
  }
  return img;
}

inline constexpr int kTrainViews = 3;
inline constexpr int kDefaultResolution = 48;

template <typename Scalar>
struct Example {
  Articulation<Scalar> articulation;
  Skin<Scalar> skin;
  Vec3<Scalar> background;
  std::vector<Image<Scalar>> train_images;       // RGBA, kTrainViews
  std::vector<CameraPose<Scalar>> train_poses;
  Image<Scalar> val_image;                       // RGBA
  CameraPose<Scalar> val_pose;
};

// One dataset example: background, skin, articulation, then 3 training and
// 1 validation camera, all from the one rng in that fixed order.
template <typename Scalar>
Example<Scalar> render_example(Rng& rng, int resolution = kDefaultResolution) {
  Example<Scalar> ex;
  ex.background = sample_background<Scalar>(rng);
  ex.skin = sample_skin<Scalar>(rng);
  ex.articulation = sample_articulation<Scalar>(rng);
  const auto cuboids = build_character(ex.articulation, ex.skin);
  for (int v = 0; v < kTrainViews; ++v) {
    ex.train_poses.push_back(sample_camera<Scalar>(rng));
    ex.train_images.push_back(render_character(
        cuboids, ex.train_poses.back(), resolution, resolution,
        ex.background));
  }
  ex.val_pose = sample_camera<Scalar>(rng);
  ex.val_image = render_character(cuboids, ex.val_pose, resolution,
                                  resolution, ex.background);
  return ex;
}

// The rng stream for example `index` of a dataset seeded with `seed`;
// examples are independent and can be regenerated individually.
inline Rng example_rng(uint64_t seed, uint64_t index) {
  return Rng(seed).stream("minens-example").stream(index);
}

// RGB viewset over the training views (alpha dropped; colors are already
// composited over the example background).
template <typename Scalar>
Viewset<Scalar> train_viewset(const Example<Scalar>& ex) {
  Viewset<Scalar> vs;
  for (size_t v = 0; v < ex.train_images.size(); ++v) {
    const Image<Scalar>& src = ex.train_images[v];
    Image<Scalar> rgb(src.height, src.width, 3);
    rgb.values = src.values.leftCols(3);
    vs.images.push_back(std::move(rgb));
    vs.poses.push_back(ex.train_poses[v]);
    vs.noise_levels.push_back(0);
  }
  return vs;
}

// Bakes the posed character into a voxel grid for rendering through the
// volumetric pipeline. Each node cell is covered by supersample^3 probe
// points; coverage drives the raw density linearly between the empty
// padding level and a hard-surface level, and the color is the shaded
// color of the nearest face of the enclosing part, averaged over probes.
template <typename Scalar>
VoxelGrid<Scalar> rasterize_character(
    const std::vector<Cuboid<Scalar>>& cuboids, int side = 32,
    Scalar extent = Scalar(0.6), int supersample = 4) {
  require(supersample >= 1, "rasterize_character: supersample must be >= 1");
  VoxelGrid<Scalar> grid(side, extent);
  const Scalar h = grid.cell_size();
  const Scalar solid_raw = Scalar(60);
  for (int iz = 0; iz < side; ++iz) {
    for (int iy = 0; iy < side; ++iy) {
      for (int ix = 0; ix < side; ++ix) {
        const Vec3<Scalar> node = grid.node_position(ix, iy, iz);
        int covered = 0;
        Vec3<Scalar> color_sum = Vec3<Scalar>::Zero();
        for (int sz = 0; sz < supersample; ++sz) {
          for (int sy = 0; sy < supersample; ++sy) {
            for (int sx = 0; sx < supersample; ++sx) {
              const Vec3<Scalar> offset(
                  (Scalar(sx) + Scalar(0.5)) / Scalar(supersample) -
                      Scalar(0.5),
                  (Scalar(sy) + Scalar(0.5)) / Scalar(supersample) -
                      Scalar(0.5),
                  (Scalar(sz) + Scalar(0.5)) / Scalar(supersample) -
                      Scalar(0.5));
              const Vec3<Scalar> q = node + h * offset;
              for (const Cuboid<Scalar>& box : cuboids) {
                const Vec3<Scalar> local =
                    box.rotation.transpose() * (q - box.center);
                if ((local.cwiseAbs().array() > box.half.array()).any()) {
                  continue;
                }
                // Nearest local face decides the probe color.
                int face = 0;
                Scalar best = std::numeric_limits<Scalar>::infinity();
                for (int axis = 0; axis < 3; ++axis) {
                  const Scalar gap = box.half[axis] - std::abs(local[axis]);
                  if (gap < best) {
                    best = gap;
                    face = 2 * axis + (local[axis] >= Scalar(0) ? 0 : 1);
                  }
                }
                ++covered;
                color_sum += box.face_colors[static_cast<size_t>(face)];
                break;
              }
            }
          }
        }
        if (covered == 0) {
          grid.values.row(grid.node_row(ix, iy, iz)) =
              grid.padding_raw.array().transpose();
          continue;
        }
        const int probes = supersample * supersample * supersample;
        const Scalar coverage = Scalar(covered) / Scalar(probes);
        const Vec3<Scalar> color = color_sum / Scalar(covered);
        auto row = grid.values.row(grid.node_row(ix, iy, iz));
        row(0) = grid.padding_raw[0] +
                 coverage * (solid_raw - grid.padding_raw[0]);
        for (int ch = 0; ch < 3; ++ch) {
          const Scalar c = std::min(std::max(color[ch], Scalar(1e-4)),
                                    Scalar(1) - Scalar(1e-4));
          row(1 + ch) = std::log(c / (Scalar(1) - c));
        }
      }
    }
  }
  return grid;
}

}  // namespace minens
}  // namespace voxset
