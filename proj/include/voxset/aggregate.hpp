// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "voxset/common.hpp"
#include "voxset/field.hpp"
#include "voxset/geometry.hpp"
#include "voxset/image.hpp"

namespace voxset {

// Per-view feature volume on the same cubic node lattice as VoxelGrid, so
// volumes unprojected from different cameras line up in one world frame.
// Rows are z-major/y/x like the grid; the channel count is free.
template <typename Scalar>
struct FeatureVolume {
  int side = 0;
  Scalar extent = Scalar(0.6);
  ChannelArray<Scalar> values;  // side^3 rows x channels

  FeatureVolume() = default;
  FeatureVolume(int side_, int channels, Scalar extent_ = Scalar(0.6))
      : side(side_), extent(extent_) {
    require(side_ >= 2, "FeatureVolume: side must be at least 2");
    require(channels >= 1, "FeatureVolume: needs at least one channel");
    values = ChannelArray<Scalar>::Zero(
        static_cast<Eigen::Index>(side_) * side_ * side_, channels);
  }

  int channels() const { return static_cast<int>(values.cols()); }

  Eigen::Index node_row(int ix, int iy, int iz) const {
    return (static_cast<Eigen::Index>(iz) * side + iy) * side + ix;
  }

  Vec3<Scalar> node_position(int ix, int iy, int iz) const {
    const Scalar h = Scalar(2) * extent / Scalar(side - 1);
    return Vec3<Scalar>(-extent + h * Scalar(ix), -extent + h * Scalar(iy),
                        -extent + h * Scalar(iz));
  }
};

template <typename Scalar>
bool same_dims(const FeatureVolume<Scalar>& a, const FeatureVolume<Scalar>& b) {
  return a.side == b.side && a.extent == b.extent &&
         a.channels() == b.channels();
}

namespace detail {

// Bilinear lookup at a continuous pixel position with zero padding: corners
// falling outside the image contribute nothing.
template <typename Scalar, typename Out>
void bilinear_accumulate(const Image<Scalar>& img, Scalar row, Scalar col,
                         Out&& out) {
  const Scalar fr = std::floor(row);
  const Scalar fc = std::floor(col);
  const int r0 = static_cast<int>(fr);
  const int c0 = static_cast<int>(fc);
  const Scalar wr = row - fr;
  const Scalar wc = col - fc;
  for (int dr = 0; dr < 2; ++dr) {
    const int r = r0 + dr;
    if (r < 0 || r >= img.height) continue;
    for (int dc = 0; dc < 2; ++dc) {
      const int c = c0 + dc;
      if (c < 0 || c >= img.width) continue;
      const Scalar w =
          (dr ? wr : Scalar(1) - wr) * (dc ? wc : Scalar(1) - wc);
      out += w * img.pixel(r, c);
    }
  }
}

}  // namespace detail

// Lifts a per-view feature map into the canonical volume: each voxel node
// takes the bilinear sample of the map at its projection into the view.
// Nodes behind the camera or out of frame stay zero.
template <typename Scalar>
FeatureVolume<Scalar> unproject(const Image<Scalar>& feature_map,
                                const CameraPose<Scalar>& pose, int side,
                                Scalar extent = Scalar(0.6)) {
  validate_pose(pose);
  FeatureVolume<Scalar> vol(side, feature_map.channels(), extent);
  for (int iz = 0; iz < side; ++iz) {
    for (int iy = 0; iy < side; ++iy) {
      for (int ix = 0; ix < side; ++ix) {
        const Vec3<Scalar> q = vol.node_position(ix, iy, iz);
        const PixelProjection<Scalar> pp =
            project(pose, q, feature_map.height, feature_map.width);
        if (pp.behind) continue;
        auto row = vol.values.row(vol.node_row(ix, iy, iz));
        detail::bilinear_accumulate(feature_map, pp.row, pp.col, row);
      }
    }
  }
  return vol;
}

// Single-head dot-product attention at every voxel independently, with
// keys = values = the per-view features, scores scaled by 1/sqrt(C), and a
// residual connection adding the query. The per-voxel view contributions
// are reduced in a canonical order (score, then value, descending), making
// the output bit-identical under any permutation of the views.
template <typename Scalar>
FeatureVolume<Scalar> attend(const FeatureVolume<Scalar>& query,
                             const std::vector<FeatureVolume<Scalar>>&
                                 features) {
  require(!features.empty(), "attend: needs at least one view");
  for (const auto& f : features) {
    require(same_dims(f, query), "attend: volume dims mismatch");
  }
  const int n = static_cast<int>(features.size());
  const int channels = query.channels();
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(channels));
  FeatureVolume<Scalar> out(query.side, channels, query.extent);
  std::vector<Scalar> scores(static_cast<size_t>(n));
  std::vector<int> order(static_cast<size_t>(n));
  std::vector<Scalar> expw(static_cast<size_t>(n));
  const Eigen::Index rows = query.values.rows();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto q = query.values.row(r);
    for (int i = 0; i < n; ++i) {
      scores[static_cast<size_t>(i)] =
          (q * features[static_cast<size_t>(i)].values.row(r)).sum() * scale;
    }
    std::iota(order.begin(), order.end(), 0);
    auto value_less = [&](int a, int b) {
      const auto va = features[static_cast<size_t>(a)].values.row(r);
      const auto vb = features[static_cast<size_t>(b)].values.row(r);
      for (int ch = 0; ch < channels; ++ch) {
        if (va[ch] != vb[ch]) return va[ch] < vb[ch];
      }
      return false;
    };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const Scalar sa = scores[static_cast<size_t>(a)];
      const Scalar sb = scores[static_cast<size_t>(b)];
      if (sa != sb) return sa > sb;
      return value_less(b, a);
    });
    bool all_equal = true;
    for (int i = 1; i < n && all_equal; ++i) {
      all_equal = scores[static_cast<size_t>(order[0])] ==
                      scores[static_cast<size_t>(order[static_cast<size_t>(
                          i)])] &&
                  !value_less(order[0], order[static_cast<size_t>(i)]) &&
                  !value_less(order[static_cast<size_t>(i)], order[0]);
    }
    auto out_row = out.values.row(r);
    if (all_equal) {
      // Softmax over identical entries is exactly uniform and the convex
      // combination collapses to the shared value.
      out_row = features[static_cast<size_t>(order[0])].values.row(r) + q;
      continue;
    }
    const Scalar top = scores[static_cast<size_t>(order[0])];
    Scalar denom = Scalar(0);
    for (int i = 0; i < n; ++i) {
      const Scalar e =
          std::exp(scores[static_cast<size_t>(order[static_cast<size_t>(
              i)])] - top);
      expw[static_cast<size_t>(i)] = e;
      denom += e;
    }
    out_row.setZero();
    for (int i = 0; i < n; ++i) {
      const Scalar p = expw[static_cast<size_t>(i)] / denom;
      out_row += p * features[static_cast<size_t>(
                         order[static_cast<size_t>(i)])].values.row(r);
    }
    out_row += q;
  }
  return out;
}

// Voxel-wise arithmetic mean across views.
template <typename Scalar>
FeatureVolume<Scalar> mean_pool(const std::vector<FeatureVolume<Scalar>>&
                                    features) {
  require(!features.empty(), "mean_pool: needs at least one view");
  for (const auto& f : features) {
    require(same_dims(f, features[0]), "mean_pool: volume dims mismatch");
  }
  FeatureVolume<Scalar> out = features[0];
  for (size_t i = 1; i < features.size(); ++i) {
    out.values += features[i].values;
  }
  out.values /= Scalar(features.size());
  return out;
}

}  // namespace voxset
