// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "voxset/common.hpp"
#include "voxset/geometry.hpp"
#include "voxset/image.hpp"

namespace voxset {

// A set of N posed images of one object, treated as a single sample.
// noise_levels holds per-view timesteps; 0 marks a clean conditioning view.
// pose_channels, when present, carries the 6-channel pose encoding per view.
template <typename Scalar>
struct Viewset {
  std::vector<Image<Scalar>> images;
  std::vector<CameraPose<Scalar>> poses;
  std::vector<int> noise_levels;
  std::vector<Image<Scalar>> pose_channels;  // empty or one per view

  int size() const { return static_cast<int>(images.size()); }
};

template <typename Scalar>
void validate_viewset(const Viewset<Scalar>& vs) {
  require(!vs.images.empty(), "Viewset: needs at least one view");
  require(vs.poses.size() == vs.images.size(),
          "Viewset: image/pose count mismatch");
  require(vs.noise_levels.size() == vs.images.size(),
          "Viewset: image/noise-level count mismatch");
  require(vs.pose_channels.empty() ||
              vs.pose_channels.size() == vs.images.size(),
          "Viewset: pose-channel count mismatch");
  for (size_t i = 1; i < vs.images.size(); ++i) {
    require(same_shape(vs.images[i], vs.images[0]),
            "Viewset: views must share one resolution");
  }
  for (int t : vs.noise_levels) {
    require(t >= 0, "Viewset: noise levels must be non-negative timesteps");
  }
}

// Attaches the 6-channel pose encoding for every view.
template <typename Scalar>
void encode_poses(Viewset<Scalar>& vs) {
  vs.pose_channels.clear();
  vs.pose_channels.reserve(vs.images.size());
  for (size_t i = 0; i < vs.images.size(); ++i) {
    vs.pose_channels.push_back(
        pose_encode(vs.poses[i], vs.images[i].height, vs.images[i].width));
  }
}

}  // namespace voxset
