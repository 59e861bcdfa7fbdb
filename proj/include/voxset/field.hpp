// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "voxset/common.hpp"

namespace voxset {

template <typename Scalar>
Scalar softplus(Scalar x) {
  // log(1 + e^x), overflow-safe on both sides.
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

// Cubic voxel grid over [-extent, extent]^3 storing raw (pre-activation)
// values: channel 0 density, channels 1-3 color. Nodes lie at the lattice
// points g = 0..side-1 per axis with the outermost nodes on the cube faces,
// so points inside the cube interpolate real nodes only. A one-cell padding
// band of fixed raw values surrounds the cube and keeps sampling (and its
// gradient) defined everywhere.
template <typename Scalar>
struct VoxelGrid {
  int side = 0;
  Scalar extent = Scalar(0.6);        // half-width of the cube
  Scalar density_bias = Scalar(-2);   // added to raw density before softplus
  Eigen::Matrix<Scalar, 4, 1> padding_raw =
      Eigen::Matrix<Scalar, 4, 1>(Scalar(-10), Scalar(0), Scalar(0), Scalar(0));
  ChannelArray<Scalar> values;        // side^3 rows x 4 channels

  VoxelGrid() = default;
  VoxelGrid(int side_, Scalar extent_ = Scalar(0.6))
      : side(side_), extent(extent_) {
    require(side_ >= 2, "VoxelGrid: side must be at least 2");
    require(extent_ > Scalar(0), "VoxelGrid: extent must be positive");
    values = ChannelArray<Scalar>::Zero(
        static_cast<Eigen::Index>(side_) * side_ * side_, 4);
  }

  // Rows are z-major, then y, then x — the on-disk order.
  Eigen::Index node_row(int ix, int iy, int iz) const {
    return (static_cast<Eigen::Index>(iz) * side + iy) * side + ix;
  }

  Scalar cell_size() const { return Scalar(2) * extent / Scalar(side - 1); }

  Vec3<Scalar> node_position(int ix, int iy, int iz) const {
    const Scalar h = cell_size();
    return Vec3<Scalar>(-extent + h * Scalar(ix), -extent + h * Scalar(iy),
                        -extent + h * Scalar(iz));
  }

  // World point -> continuous lattice coordinate, one axis.
  Scalar lattice_coord(Scalar x) const {
    return (x + extent) / (Scalar(2) * extent) * Scalar(side - 1);
  }
};

template <typename Scalar>
struct FieldSample {
  Scalar density;      // >= 0
  Vec3<Scalar> rgb;    // each in (0, 1)
};

namespace detail {

// The 8 interpolation corners for a world point: a values-row per corner
// (-1 selects the padding constant) and the matching trilinear weight.
// Lattice coordinates are clamped to [-1, side] so that far outside the
// cube every corner is padding and the result saturates smoothly.
template <typename Scalar>
struct Stencil {
  Eigen::Index rows[8];
  Scalar weights[8];
};

template <typename Scalar>
Stencil<Scalar> stencil(const VoxelGrid<Scalar>& grid, const Vec3<Scalar>& q) {
  Scalar frac[3];
  int base[3];
  for (int axis = 0; axis < 3; ++axis) {
    Scalar v = grid.lattice_coord(q[axis]);
    v = std::min(std::max(v, Scalar(-1)), Scalar(grid.side));
    const Scalar f = std::floor(v);
    base[axis] = static_cast<int>(f);
    frac[axis] = v - f;
  }
  Stencil<Scalar> st;
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1;
    const int dy = (corner >> 1) & 1;
    const int dz = (corner >> 2) & 1;
    const int ix = base[0] + dx;
    const int iy = base[1] + dy;
    const int iz = base[2] + dz;
    const bool inside = ix >= 0 && ix < grid.side && iy >= 0 &&
                        iy < grid.side && iz >= 0 && iz < grid.side;
    st.rows[corner] = inside ? grid.node_row(ix, iy, iz) : Eigen::Index(-1);
    st.weights[corner] = (dx ? frac[0] : Scalar(1) - frac[0]) *
                         (dy ? frac[1] : Scalar(1) - frac[1]) *
                         (dz ? frac[2] : Scalar(1) - frac[2]);
  }
  return st;
}

}  // namespace detail

// Per-thread gradient accumulator shaped like the grid's raw values.
// Accumulation is additive; buffers filled on worker threads are combined
// with merge() before the optimizer consumes them.
template <typename Scalar>
struct GradientBuffer {
  ChannelArray<Scalar> values;

  GradientBuffer() = default;
  explicit GradientBuffer(const VoxelGrid<Scalar>& grid)
      : values(ChannelArray<Scalar>::Zero(grid.values.rows(), 4)) {}

  void reset() { values.setZero(); }

  void merge(const GradientBuffer& other) {
    require(values.rows() == other.values.rows(),
            "GradientBuffer: merge shape mismatch");
    values += other.values;
  }
};

namespace detail {

// Adds d_raw, spread by the stencil weights, to the raw-value gradient.
// Padding corners carry no parameters and are skipped.
template <typename Scalar>
void scatter(const Stencil<Scalar>& st,
             const Eigen::Matrix<Scalar, 4, 1>& d_raw,
             GradientBuffer<Scalar>& grad) {
  for (int corner = 0; corner < 8; ++corner) {
    const Scalar w = st.weights[corner];
    if (w == Scalar(0) || st.rows[corner] < 0) continue;
    grad.values.row(st.rows[corner]) += (w * d_raw).array().transpose();
  }
}

}  // namespace detail

// Trilinear interpolation of the raw channels, before activations.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> sample_raw(const VoxelGrid<Scalar>& grid,
                                       const Vec3<Scalar>& q) {
  const auto st = detail::stencil(grid, q);
  Eigen::Matrix<Scalar, 4, 1> raw = Eigen::Matrix<Scalar, 4, 1>::Zero();
  for (int corner = 0; corner < 8; ++corner) {
    const Scalar w = st.weights[corner];
    if (w == Scalar(0)) continue;
    if (st.rows[corner] < 0) {
      raw += w * grid.padding_raw;
    } else {
      raw += w * grid.values.row(st.rows[corner]).matrix().transpose();
    }
  }
  return raw;
}

template <typename Scalar>
FieldSample<Scalar> sample(const VoxelGrid<Scalar>& grid,
                           const Vec3<Scalar>& q) {
  const Eigen::Matrix<Scalar, 4, 1> raw = sample_raw(grid, q);
  FieldSample<Scalar> out;
  out.density = softplus(raw[0] + grid.density_bias);
  out.rgb = Vec3<Scalar>(sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3]));
  return out;
}

// Maps d(loss)/d(density, rgb) at a sample back to d(loss)/d(interpolated
// raw) through the activation derivatives.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> activation_backward(
    const VoxelGrid<Scalar>& grid, const Eigen::Matrix<Scalar, 4, 1>& raw,
    Scalar d_density, const Vec3<Scalar>& d_rgb) {
  Eigen::Matrix<Scalar, 4, 1> d_raw;
  d_raw[0] = d_density * sigmoid(raw[0] + grid.density_bias);
  for (int ch = 0; ch < 3; ++ch) {
    const Scalar s = sigmoid(raw[1 + ch]);
    d_raw[1 + ch] = d_rgb[ch] * s * (Scalar(1) - s);
  }
  return d_raw;
}

// Reverse-mode of sample: scatters d(loss)/d(density, rgb) through the
// activation derivatives and trilinear weights into the raw-value buffer.
template <typename Scalar>
void sample_backward(const VoxelGrid<Scalar>& grid, const Vec3<Scalar>& q,
                     Scalar d_density, const Vec3<Scalar>& d_rgb,
                     GradientBuffer<Scalar>& grad) {
  const auto st = detail::stencil(grid, q);
  Eigen::Matrix<Scalar, 4, 1> raw = Eigen::Matrix<Scalar, 4, 1>::Zero();
  for (int corner = 0; corner < 8; ++corner) {
    const Scalar w = st.weights[corner];
    if (w == Scalar(0)) continue;
    raw += w * (st.rows[corner] < 0
                    ? grid.padding_raw
                    : Eigen::Matrix<Scalar, 4, 1>(
                          grid.values.row(st.rows[corner]).matrix().transpose()));
  }
  detail::scatter(st, activation_backward(grid, raw, d_density, d_rgb), grad);
}

}  // namespace voxset
