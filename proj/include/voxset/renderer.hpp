// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "voxset/field.hpp"
#include "voxset/geometry.hpp"
#include "voxset/image.hpp"
#include "voxset/parallel.hpp"
#include "voxset/viewset.hpp"

namespace voxset {

template <typename Scalar>
struct RenderConfig {
  int samples_per_ray = 64;
  // near/far in world units along the ray; both 0 means "derive from the
  // grid bounds and camera position" (the ray-box clip below).
  Scalar near = Scalar(0);
  Scalar far = Scalar(0);
  Vec3<Scalar> background_rgb = Vec3<Scalar>(Scalar(1), Scalar(1), Scalar(1));
  // Early ray termination: stop marching once transmittance drops below
  // this. The prefix identity sum(w) + T = 1 is unaffected. 0 disables.
  Scalar stop_transmittance = Scalar(1e-5);
};

template <typename Scalar>
void validate_render_config(const RenderConfig<Scalar>& cfg) {
  require(cfg.samples_per_ray >= 2,
          "RenderConfig: samples_per_ray must be at least 2");
  const bool auto_range = cfg.near == Scalar(0) && cfg.far == Scalar(0);
  require(auto_range || (cfg.near >= Scalar(0) && cfg.near < cfg.far),
          "RenderConfig: need 0 <= near < far (or both 0 for automatic)");
  for (int ch = 0; ch < 3; ++ch) {
    require(cfg.background_rgb[ch] >= Scalar(0) &&
                cfg.background_rgb[ch] <= Scalar(1),
            "RenderConfig: background_rgb must be in [0,1]");
  }
}

// Clips the ray's [near, far] to the grid's bounding cube. Returns false
// when the ray misses; such rays composite to the plain background.
template <typename Scalar>
bool ray_grid_span(const VoxelGrid<Scalar>& grid, const Ray<Scalar>& ray,
                   const RenderConfig<Scalar>& cfg, Scalar& t0, Scalar& t1) {
  const Scalar e = grid.extent;
  const bool auto_range = cfg.near == Scalar(0) && cfg.far == Scalar(0);
  Scalar lo = auto_range ? Scalar(0) : std::max(cfg.near, Scalar(0));
  Scalar hi = auto_range ? std::numeric_limits<Scalar>::infinity() : cfg.far;
  for (int axis = 0; axis < 3; ++axis) {
    const Scalar o = ray.origin[axis];
    const Scalar d = ray.direction[axis];
    if (std::abs(d) < Scalar(1e-12)) {
      if (std::abs(o) > e) return false;
      continue;
    }
    Scalar ta = (-e - o) / d;
    Scalar tb = (e - o) / d;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  }
  if (!(lo < hi)) return false;
  t0 = lo;
  t1 = hi;
  return true;
}

template <typename Scalar>
struct RayComposite {
  Vec3<Scalar> rgb;
  Scalar weight_sum;      // sum of per-sample compositing weights
  Scalar transmittance;   // residual T multiplying the background
};

// Emission-absorption compositing along one ray: n uniformly spaced
// midpoint samples over the clipped span, alpha_k = 1 - exp(-density_k
// * delta), weight_k = alpha_k * prod_{j<k} (1 - alpha_j), plus residual
// transmittance times the background.
template <typename Scalar>
RayComposite<Scalar> composite_ray(const VoxelGrid<Scalar>& grid,
                                   const Ray<Scalar>& ray,
                                   const RenderConfig<Scalar>& cfg) {
  RayComposite<Scalar> out{cfg.background_rgb, Scalar(0), Scalar(1)};
  Scalar t0, t1;
  if (!ray_grid_span(grid, ray, cfg, t0, t1)) return out;
  const int n = cfg.samples_per_ray;
  const Scalar delta = (t1 - t0) / Scalar(n);
  Vec3<Scalar> rgb = Vec3<Scalar>::Zero();
  Scalar weight_sum = Scalar(0);
  Scalar trans = Scalar(1);
  for (int k = 0; k < n; ++k) {
    const Scalar t = t0 + (Scalar(k) + Scalar(0.5)) * delta;
    const Vec3<Scalar> q = ray.origin + t * ray.direction;
    const FieldSample<Scalar> s = sample(grid, q);
    const Scalar keep = std::exp(-s.density * delta);
    const Scalar alpha = Scalar(1) - keep;
    const Scalar w = trans * alpha;
    rgb += w * s.rgb;
    weight_sum += w;
    trans *= keep;
    if (trans < cfg.stop_transmittance) break;
  }
  out.rgb = rgb + trans * cfg.background_rgb;
  out.weight_sum = weight_sum;
  out.transmittance = trans;
  return out;
}

template <typename Scalar>
Image<Scalar> render(const VoxelGrid<Scalar>& grid,
                     const CameraPose<Scalar>& pose, int height, int width,
                     const RenderConfig<Scalar>& cfg, int threads = 1) {
  validate_pose(pose);
  validate_render_config(cfg);
  Image<Scalar> out(height, width, 3);
  parallel_chunks(height, threads, [&](int, int row0, int row1) {
    for (int r = row0; r < row1; ++r) {
      for (int c = 0; c < width; ++c) {
        const Ray<Scalar> ray = ray_for_pixel(pose, r, c, height, width);
        const RayComposite<Scalar> comp = composite_ray(grid, ray, cfg);
        auto px = out.pixel(r, c);
        px(0) = comp.rgb[0];
        px(1) = comp.rgb[1];
        px(2) = comp.rgb[2];
      }
    }
  });
  return out;
}

namespace detail {

// Everything the backward sweep needs about one ray sample, captured
// during the forward sweep so nothing is recomputed.
template <typename Scalar>
struct RaySampleRecord {
  Stencil<Scalar> st;
  Eigen::Matrix<Scalar, 4, 1> raw;
  Vec3<Scalar> rgb;     // activated color
  Scalar alpha;
  Scalar trans_before;  // transmittance upstream of this sample
};

// Forward sweep with bookkeeping; returns the composited pixel color.
template <typename Scalar>
Vec3<Scalar> trace_ray(const VoxelGrid<Scalar>& grid, const Ray<Scalar>& ray,
                       const RenderConfig<Scalar>& cfg,
                       std::vector<RaySampleRecord<Scalar>>& records,
                       Scalar& delta_out, Scalar& trans_out) {
  records.clear();
  delta_out = Scalar(0);
  trans_out = Scalar(1);
  Scalar t0, t1;
  if (!ray_grid_span(grid, ray, cfg, t0, t1)) return cfg.background_rgb;
  const int n = cfg.samples_per_ray;
  const Scalar delta = (t1 - t0) / Scalar(n);
  delta_out = delta;
  Vec3<Scalar> rgb = Vec3<Scalar>::Zero();
  Scalar trans = Scalar(1);
  for (int k = 0; k < n; ++k) {
    const Scalar t = t0 + (Scalar(k) + Scalar(0.5)) * delta;
    const Vec3<Scalar> q = ray.origin + t * ray.direction;
    RaySampleRecord<Scalar> rec;
    rec.st = stencil(grid, q);
    rec.raw.setZero();
    for (int corner = 0; corner < 8; ++corner) {
      const Scalar w = rec.st.weights[corner];
      if (w == Scalar(0)) continue;
      if (rec.st.rows[corner] < 0) {
        rec.raw += w * grid.padding_raw;
      } else {
        rec.raw +=
            w * grid.values.row(rec.st.rows[corner]).matrix().transpose();
      }
    }
    const Scalar density = softplus(rec.raw[0] + grid.density_bias);
    rec.rgb = Vec3<Scalar>(sigmoid(rec.raw[1]), sigmoid(rec.raw[2]),
                           sigmoid(rec.raw[3]));
    const Scalar keep = std::exp(-density * delta);
    rec.alpha = Scalar(1) - keep;
    rec.trans_before = trans;
    records.push_back(rec);
    rgb += trans * rec.alpha * rec.rgb;
    trans *= keep;
    if (trans < cfg.stop_transmittance) break;
  }
  trans_out = trans;
  return rgb + trans * cfg.background_rgb;
}

// Backward sweep over a traced ray. `rest` runs the compositing recurrence
// from the back: rest_k = alpha_k c_k + (1-alpha_k) rest_{k+1}, starting at
// the background, so that d pixel / d alpha_k = T_k (c_k - rest_{k+1})
// without dividing by (1 - alpha) — stable for fully opaque samples.
template <typename Scalar>
void backward_ray(const VoxelGrid<Scalar>& grid,
                  const std::vector<RaySampleRecord<Scalar>>& records,
                  Scalar delta, const Vec3<Scalar>& d_pixel,
                  const RenderConfig<Scalar>& cfg,
                  GradientBuffer<Scalar>& grad) {
  Vec3<Scalar> rest = cfg.background_rgb;
  for (int k = static_cast<int>(records.size()) - 1; k >= 0; --k) {
    const RaySampleRecord<Scalar>& rec = records[static_cast<size_t>(k)];
    const Scalar d_alpha =
        rec.trans_before * d_pixel.dot(rec.rgb - rest);
    const Scalar d_density = d_alpha * delta * (Scalar(1) - rec.alpha);
    const Vec3<Scalar> d_rgb = rec.trans_before * rec.alpha * d_pixel;
    scatter(rec.st, activation_backward(grid, rec.raw, d_density, d_rgb),
            grad);
    rest = rec.alpha * rec.rgb + (Scalar(1) - rec.alpha) * rest;
  }
}

}  // namespace detail

// Gradient of sum(d_image .* render(grid, ...)) with respect to the grid's
// raw values, accumulated into `grad`. Exact reverse of the compositing
// recurrence; per-worker buffers are merged in worker order.
template <typename Scalar>
void render_backward(const VoxelGrid<Scalar>& grid,
                     const CameraPose<Scalar>& pose, int height, int width,
                     const RenderConfig<Scalar>& cfg,
                     const Image<Scalar>& d_image,
                     GradientBuffer<Scalar>& grad, int threads = 1) {
  validate_pose(pose);
  validate_render_config(cfg);
  require(d_image.height == height && d_image.width == width &&
              d_image.channels() == 3,
          "render_backward: d_image shape mismatch");
  const int workers = threads <= 1 ? 1 : std::min(threads, height);
  std::vector<GradientBuffer<Scalar>> partial(
      static_cast<size_t>(workers), GradientBuffer<Scalar>(grid));
  parallel_chunks(height, workers, [&](int w, int row0, int row1) {
    std::vector<detail::RaySampleRecord<Scalar>> records;
    records.reserve(static_cast<size_t>(cfg.samples_per_ray));
    for (int r = row0; r < row1; ++r) {
      for (int c = 0; c < width; ++c) {
        const Vec3<Scalar> d_pixel(d_image(r, c, 0), d_image(r, c, 1),
                                   d_image(r, c, 2));
        if (d_pixel.isZero()) continue;
        const Ray<Scalar> ray = ray_for_pixel(pose, r, c, height, width);
        Scalar delta, trans;
        detail::trace_ray(grid, ray, cfg, records, delta, trans);
        detail::backward_ray(grid, records, delta, d_pixel, cfg, partial[w]);
      }
    }
  });
  for (const auto& p : partial) grad.merge(p);
}

// Weighted multi-view photometric loss and, when `grad` is non-null, its
// gradient. Per view: weight * mean squared error over H*W*3 values. The
// forward trace is shared between the loss and the backward sweep.
template <typename Scalar>
Scalar render_loss(const VoxelGrid<Scalar>& grid, const Viewset<Scalar>& vs,
                   const std::vector<Scalar>& weights,
                   const RenderConfig<Scalar>& cfg,
                   std::type_identity_t<GradientBuffer<Scalar>>* grad,
                   int threads = 1) {
  validate_viewset(vs);
  validate_render_config(cfg);
  require(weights.size() == vs.images.size(),
          "render_loss: view/weight count mismatch");
  for (const auto& pose : vs.poses) validate_pose(pose);
  Scalar loss = Scalar(0);
  for (int view = 0; view < vs.size(); ++view) {
    const Image<Scalar>& target = vs.images[view];
    require(target.channels() == 3, "render_loss: targets must be RGB");
    const CameraPose<Scalar>& pose = vs.poses[view];
    const int height = target.height;
    const int width = target.width;
    const Scalar weight = weights[view];
    const Scalar inv_count = Scalar(1) / Scalar(height * width * 3);
    const int workers = threads <= 1 ? 1 : std::min(threads, height);
    std::vector<GradientBuffer<Scalar>> partial;
    if (grad) {
      partial.assign(static_cast<size_t>(workers),
                     GradientBuffer<Scalar>(grid));
    }
    std::vector<Scalar> partial_loss(static_cast<size_t>(workers), Scalar(0));
    parallel_chunks(height, workers, [&](int w, int row0, int row1) {
      std::vector<detail::RaySampleRecord<Scalar>> records;
      records.reserve(static_cast<size_t>(cfg.samples_per_ray));
      Scalar local = Scalar(0);
      for (int r = row0; r < row1; ++r) {
        for (int c = 0; c < width; ++c) {
          const Ray<Scalar> ray = ray_for_pixel(pose, r, c, height, width);
          Vec3<Scalar> pixel;
          Scalar delta = Scalar(0), trans = Scalar(1);
          if (grad) {
            pixel = detail::trace_ray(grid, ray, cfg, records, delta, trans);
          } else {
            pixel = composite_ray(grid, ray, cfg).rgb;
          }
          const Vec3<Scalar> diff =
              pixel - Vec3<Scalar>(target(r, c, 0), target(r, c, 1),
                                   target(r, c, 2));
          local += weight * inv_count * diff.squaredNorm();
          if (grad) {
            const Vec3<Scalar> d_pixel =
                Scalar(2) * weight * inv_count * diff;
            detail::backward_ray(grid, records, delta, d_pixel, cfg,
                                 partial[w]);
          }
        }
      }
      partial_loss[w] = local;
    });
    for (int w = 0; w < workers; ++w) {
      loss += partial_loss[static_cast<size_t>(w)];
      if (grad) grad->merge(partial[static_cast<size_t>(w)]);
    }
  }
  return loss;
}

}  // namespace voxset
