// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "voxset/renderer.hpp"
#include "voxset/rng.hpp"
#include "voxset/viewset.hpp"

namespace voxset {

// Discrete noise schedule over timesteps 0..steps. Index t holds the
// cumulative signal fraction alpha_bar[t] and the noise level
// sigma[t] = sqrt(1 - alpha_bar[t]); t = 0 is the clean endpoint.
template <typename Scalar>
struct NoiseSchedule {
  int steps = 0;
  std::vector<Scalar> alpha_bar;  // steps + 1 values in (0, 1]
  std::vector<Scalar> sigma;      // steps + 1 values in [0, 1)
};

// Cosine schedule: alpha_bar(t) = f(t)/f(0) with
// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), offset s = 0.008, built from
// per-step ratios clipped to >= 0.001 so no single step destroys more than
// 99.9% of the signal.
template <typename Scalar>
NoiseSchedule<Scalar> cosine_schedule(int steps) {
  require(steps >= 1, "cosine_schedule: steps must be >= 1");
  const Scalar s = Scalar(0.008);
  const Scalar half_pi = Scalar(2) * std::atan(Scalar(1));
  auto f = [s, half_pi, steps](int t) {
    const Scalar u = (Scalar(t) / Scalar(steps) + s) / (Scalar(1) + s);
    const Scalar c = std::cos(u * half_pi);
    return c * c;
  };
  NoiseSchedule<Scalar> sched;
  sched.steps = steps;
  sched.alpha_bar.resize(static_cast<size_t>(steps) + 1);
  sched.sigma.resize(static_cast<size_t>(steps) + 1);
  sched.alpha_bar[0] = Scalar(1);
  sched.sigma[0] = Scalar(0);
  const Scalar f0 = f(0);
  Scalar prev_f = f0;
  Scalar acc = Scalar(1);
  for (int t = 1; t <= steps; ++t) {
    const Scalar ft = f(t);
    const Scalar ratio = std::max(ft / prev_f, Scalar(0.001));
    prev_f = ft;
    acc *= ratio;
    sched.alpha_bar[static_cast<size_t>(t)] = acc;
    sched.sigma[static_cast<size_t>(t)] = std::sqrt(Scalar(1) - acc);
  }
  return sched;
}

inline constexpr double kMinSnrCap = 5.0;

// Min-SNR-capped loss weight: min((1 - sigma^2)/sigma^2, 5). Clean views
// (sigma = 0, infinite SNR) get the cap.
template <typename Scalar>
Scalar min_snr_weight(int t, const NoiseSchedule<Scalar>& sched) {
  require(t >= 0 && t <= sched.steps, "min_snr_weight: timestep out of range");
  const Scalar sigma = sched.sigma[static_cast<size_t>(t)];
  if (sigma == Scalar(0)) return Scalar(kMinSnrCap);
  const Scalar s2 = sigma * sigma;
  const Scalar snr = (Scalar(1) - s2) / s2;
  return std::min(snr, Scalar(kMinSnrCap));
}

// Weight of the unseen-view loss term: lambda times the smallest per-view
// Min-SNR weight, so the term fades exactly when every view is noisy.
template <typename Scalar>
Scalar unseen_weight(Scalar lambda, const std::vector<int>& timesteps,
                     const NoiseSchedule<Scalar>& sched) {
  require(!timesteps.empty(), "unseen_weight: empty viewset");
  Scalar lo = min_snr_weight(timesteps[0], sched);
  for (size_t i = 1; i < timesteps.size(); ++i) {
    lo = std::min(lo, min_snr_weight(timesteps[i], sched));
  }
  return lambda * lo;
}

// Applies noise level t to the masked views: x <- sqrt(1 - sigma_t^2) x +
// sigma_t eps. Unmasked views pass through unchanged as clean conditioning
// views (noise level 0). eps entries for unmasked views are ignored.
template <typename Scalar>
Viewset<Scalar> noise_viewset(const Viewset<Scalar>& vs, int t,
                              const std::vector<int>& mask,
                              const std::vector<Image<Scalar>>& eps,
                              const NoiseSchedule<Scalar>& sched) {
  validate_viewset(vs);
  require(t >= 0 && t <= sched.steps, "noise_viewset: timestep out of range");
  require(mask.size() == vs.images.size(),
          "noise_viewset: mask length mismatch");
  require(eps.size() == vs.images.size(),
          "noise_viewset: noise sample count mismatch");
  const Scalar sigma = sched.sigma[static_cast<size_t>(t)];
  const Scalar scale = std::sqrt(Scalar(1) - sigma * sigma);
  Viewset<Scalar> out = vs;
  for (int i = 0; i < vs.size(); ++i) {
    if (!mask[static_cast<size_t>(i)]) {
      out.noise_levels[static_cast<size_t>(i)] = 0;
      continue;
    }
    const Image<Scalar>& e = eps[static_cast<size_t>(i)];
    require(same_shape(e, vs.images[static_cast<size_t>(i)]),
            "noise_viewset: noise sample shape mismatch");
    out.images[static_cast<size_t>(i)].values =
        scale * vs.images[static_cast<size_t>(i)].values + sigma * e.values;
    out.noise_levels[static_cast<size_t>(i)] = t;
  }
  return out;
}

// Draws a unit-Gaussian image; values in row-major pixel order, channels
// innermost, so the draw order is part of the reproducibility contract.
template <typename Scalar>
Image<Scalar> gaussian_image(int height, int width, int channels, Rng& rng) {
  Image<Scalar> img(height, width, channels);
  for (Eigen::Index i = 0; i < img.values.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < img.values.cols(); ++ch) {
      img.values(i, ch) = Scalar(rng.normal());
    }
  }
  return img;
}

template <typename Scalar>
Viewset<Scalar> noise_viewset(const Viewset<Scalar>& vs, int t,
                              const std::vector<int>& mask,
                              const NoiseSchedule<Scalar>& sched, Rng& rng) {
  std::vector<Image<Scalar>> eps;
  eps.reserve(vs.images.size());
  for (const auto& img : vs.images) {
    eps.push_back(gaussian_image<Scalar>(img.height, img.width,
                                         img.channels(), rng));
  }
  return noise_viewset(vs, t, mask, eps, sched);
}

// One deterministic (eta = 0) reverse step from t to t_prev given the
// denoiser's clean-image estimate: the implied noise
// eps_hat = (x_t - sqrt(alpha_bar_t) x0_hat)/sigma_t is kept and the pair
// is recombined at the earlier timestep. Clean views pass through.
template <typename Scalar>
Viewset<Scalar> ddim_step(const Viewset<Scalar>& vs,
                          const std::vector<Image<Scalar>>& x0_hat, int t,
                          int t_prev, const NoiseSchedule<Scalar>& sched) {
  validate_viewset(vs);
  require(t > t_prev && t_prev >= 0 && t <= sched.steps,
          "ddim_step: need steps >= t > t_prev >= 0");
  require(x0_hat.size() == vs.images.size(),
          "ddim_step: estimate count mismatch");
  const Scalar root_ab_t = std::sqrt(sched.alpha_bar[static_cast<size_t>(t)]);
  const Scalar sigma_t = sched.sigma[static_cast<size_t>(t)];
  const Scalar root_ab_p =
      std::sqrt(sched.alpha_bar[static_cast<size_t>(t_prev)]);
  const Scalar sigma_p = sched.sigma[static_cast<size_t>(t_prev)];
  Viewset<Scalar> out = vs;
  for (int i = 0; i < vs.size(); ++i) {
    const size_t ui = static_cast<size_t>(i);
    if (vs.noise_levels[ui] == 0) continue;  // clean conditioning view
    require(vs.noise_levels[ui] == t,
            "ddim_step: noised view is not at timestep t");
    require(same_shape(x0_hat[ui], vs.images[ui]),
            "ddim_step: estimate shape mismatch");
    if (t_prev == 0) {
      // sigma_0 = 0 and alpha_bar_0 = 1: the step lands exactly on the
      // estimate; write it through untouched rather than via the formula.
      out.images[ui] = x0_hat[ui];
    } else {
      const auto& xt = vs.images[ui].values;
      const auto& x0 = x0_hat[ui].values;
      out.images[ui].values =
          root_ab_p * x0 + (sigma_p / sigma_t) * (xt - root_ab_t * x0);
    }
    out.noise_levels[ui] = t_prev;
  }
  return out;
}

// The strided timesteps for n-step inference over a T-step schedule:
// round(T * (n - i)/n) for i = 0..n — uniform stride including both T and 0.
inline std::vector<int> inference_timesteps(int schedule_steps,
                                            int inference_steps) {
  require(inference_steps >= 1 && inference_steps <= schedule_steps,
          "inference_timesteps: need 1 <= inference steps <= schedule steps");
  std::vector<int> ts(static_cast<size_t>(inference_steps) + 1);
  for (int i = 0; i <= inference_steps; ++i) {
    const double x = static_cast<double>(schedule_steps) *
                     static_cast<double>(inference_steps - i) /
                     static_cast<double>(inference_steps);
    ts[static_cast<size_t>(i)] = static_cast<int>(std::lround(x));
  }
  return ts;
}

// Per-view noise-state choices for a two-view training pair, with the
// default selection probabilities.
enum class NoiseState {
  single_view = 0,   // viewset collapses to one noised view
  both_noised = 1,   // both views carry the same noise level
  one_clean = 2,     // one noised view conditioned on one clean view
};

template <typename Scalar>
struct NoiseStateSampler {
  std::array<Scalar, 3> probabilities{Scalar(0.45), Scalar(0.45),
                                      Scalar(0.1)};

  NoiseState sample(Rng& rng) const {
    Scalar total = Scalar(0);
    for (Scalar p : probabilities) {
      require(p >= Scalar(0), "NoiseStateSampler: negative probability");
      total += p;
    }
    require(std::abs(total - Scalar(1)) < Scalar(1e-9),
            "NoiseStateSampler: probabilities must sum to 1");
    const Scalar u = Scalar(rng.uniform01());
    Scalar acc = Scalar(0);
    for (int k = 0; k < 2; ++k) {
      acc += probabilities[static_cast<size_t>(k)];
      if (u < acc) return static_cast<NoiseState>(k);
    }
    return NoiseState::one_clean;
  }
};

template <typename Scalar>
using Denoiser = std::function<VoxelGrid<Scalar>(const Viewset<Scalar>&,
                                                 const std::vector<int>&)>;

template <typename Scalar>
struct SampleResult {
  VoxelGrid<Scalar> grid;
  Viewset<Scalar> viewset;
};

// Progressive denoising of a viewset. Clean conditioning views come first
// and are never modified; one generated view per entry of generate_poses is
// initialized from a unit Gaussian. At each strided timestep the denoiser's
// grid is rendered into every noised viewpoint to form the x0 estimate and
// a deterministic DDIM step is applied.
template <typename Scalar>
SampleResult<Scalar> sample_loop(const Denoiser<Scalar>& denoiser,
                                 const NoiseSchedule<Scalar>& sched,
                                 int inference_steps,
                                 const Viewset<Scalar>& conditioning,
                                 const std::vector<CameraPose<Scalar>>&
                                     generate_poses,
                                 int height, int width,
                                 const RenderConfig<Scalar>& cfg, Rng& rng,
                                 int threads = 1) {
  require(!generate_poses.empty(),
          "sample_loop: nothing to generate (no target poses)");
  if (conditioning.size() > 0) validate_viewset(conditioning);
  for (const auto& img : conditioning.images) {
    require(img.height == height && img.width == width,
            "sample_loop: conditioning resolution mismatch");
  }
  for (int t : conditioning.noise_levels) {
    require(t == 0, "sample_loop: conditioning views must be clean");
  }
  const std::vector<int> ts = inference_timesteps(sched.steps,
                                                  inference_steps);
  Viewset<Scalar> vs = conditioning;
  for (const auto& pose : generate_poses) {
    vs.images.push_back(gaussian_image<Scalar>(height, width, 3, rng));
    vs.poses.push_back(pose);
    vs.noise_levels.push_back(ts[0]);
  }
  if (!vs.pose_channels.empty()) encode_poses(vs);
  VoxelGrid<Scalar> grid;
  std::vector<Image<Scalar>> x0_hat(static_cast<size_t>(vs.size()));
  for (size_t i = 0; i + 1 < ts.size(); ++i) {
    grid = denoiser(vs, vs.noise_levels);
    for (int v = 0; v < vs.size(); ++v) {
      if (vs.noise_levels[static_cast<size_t>(v)] == 0) continue;
      x0_hat[static_cast<size_t>(v)] =
          render(grid, vs.poses[static_cast<size_t>(v)], height, width, cfg,
                 threads);
    }
    vs = ddim_step(vs, x0_hat, ts[i], ts[i + 1], sched);
  }
  return SampleResult<Scalar>{std::move(grid), std::move(vs)};
}

}  // namespace voxset
