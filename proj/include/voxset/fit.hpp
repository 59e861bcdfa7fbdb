// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "voxset/diffusion.hpp"
#include "voxset/field.hpp"
#include "voxset/renderer.hpp"
#include "voxset/viewset.hpp"

namespace voxset {

template <typename Scalar>
struct FitConfig {
  int iterations = 2000;
  Scalar step_size = Scalar(0.05);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  enum class WeightMode { uniform, min_snr };
  WeightMode weight_mode = WeightMode::uniform;
  Scalar lambda = Scalar(0.1);  // unseen-view weight factor
  int grid_side = 32;
  Scalar extent = Scalar(0.6);
  int threads = 1;
  RenderConfig<Scalar> render;
  // Needed only when views carry nonzero noise levels (min-SNR lookups).
  std::optional<NoiseSchedule<Scalar>> schedule;
};

template <typename Scalar>
void validate_fit_config(const FitConfig<Scalar>& cfg) {
  require(cfg.iterations >= 0, "FitConfig: negative iteration count");
  require(cfg.step_size > Scalar(0), "FitConfig: step size must be positive");
  require(cfg.beta1 > Scalar(0) && cfg.beta1 < Scalar(1) &&
              cfg.beta2 > Scalar(0) && cfg.beta2 < Scalar(1),
          "FitConfig: decay rates must lie in (0,1)");
  require(cfg.lambda >= Scalar(0), "FitConfig: lambda must be >= 0");
  require(cfg.grid_side >= 2, "FitConfig: grid side must be at least 2");
}

template <typename Scalar>
struct AdamState {
  long step = 0;
  ChannelArray<Scalar> m;
  ChannelArray<Scalar> v;

  AdamState() = default;
  AdamState(Eigen::Index rows, Eigen::Index cols)
      : m(ChannelArray<Scalar>::Zero(rows, cols)),
        v(ChannelArray<Scalar>::Zero(rows, cols)) {}
};

// Standard bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(ChannelArray<Scalar>& params, const ChannelArray<Scalar>& grads,
               AdamState<Scalar>& state, const FitConfig<Scalar>& cfg) {
  require(params.rows() == grads.rows() && params.cols() == grads.cols(),
          "adam_step: parameter/gradient shape mismatch");
  require(state.m.rows() == params.rows() && state.m.cols() == params.cols(),
          "adam_step: state shape mismatch");
  state.step += 1;
  state.m = cfg.beta1 * state.m + (Scalar(1) - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (Scalar(1) - cfg.beta2) * grads.square();
  const Scalar c1 =
      Scalar(1) - std::pow(cfg.beta1, Scalar(state.step));
  const Scalar c2 =
      Scalar(1) - std::pow(cfg.beta2, Scalar(state.step));
  params -= cfg.step_size * (state.m / c1) /
            ((state.v / c2).sqrt() + cfg.epsilon);
}

// Thrown when the loss blows up and stays blown up; carries enough context
// to report without re-running.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct FitResult {
  VoxelGrid<Scalar> grid;
  std::vector<Scalar> loss_history;
};

namespace detail {

template <typename Scalar>
Scalar min_snr_or_cap(int t, const FitConfig<Scalar>& cfg) {
  if (t == 0) return Scalar(kMinSnrCap);
  require(cfg.schedule.has_value(),
          "fit_grid: noised views need a schedule for Min-SNR weights");
  return min_snr_weight(t, *cfg.schedule);
}

}  // namespace detail

// Fits a fresh grid to the target views by Adam over the raw voxel values.
// Per-view weights are uniform or Min-SNR by noise level; an optional
// unseen (image, pose) pair joins the loss with weight lambda * min over
// the target views' Min-SNR weights. Aborts with DivergenceError when the
// loss exceeds 10x its initial value for 50 consecutive iterations.
template <typename Scalar>
FitResult<Scalar> fit_grid(
    const Viewset<Scalar>& targets,
    const std::type_identity_t<
        std::optional<std::pair<Image<Scalar>, CameraPose<Scalar>>>>& unseen,
    const FitConfig<Scalar>& cfg) {
  validate_viewset(targets);
  validate_fit_config(cfg);
  Viewset<Scalar> views = targets;
  std::vector<Scalar> weights;
  Scalar min_snr = Scalar(kMinSnrCap);
  for (int i = 0; i < targets.size(); ++i) {
    const int t = targets.noise_levels[static_cast<size_t>(i)];
    const Scalar w = detail::min_snr_or_cap(t, cfg);
    min_snr = std::min(min_snr, w);
    weights.push_back(
        cfg.weight_mode == FitConfig<Scalar>::WeightMode::uniform ? Scalar(1)
                                                                  : w);
  }
  if (unseen.has_value()) {
    const Scalar lambda_t = cfg.lambda * min_snr;
    if (lambda_t > Scalar(0)) {
      views.images.push_back(unseen->first);
      views.poses.push_back(unseen->second);
      views.noise_levels.push_back(0);
      weights.push_back(lambda_t);
    }
  }
  FitResult<Scalar> result;
  result.grid = VoxelGrid<Scalar>(cfg.grid_side, cfg.extent);
  AdamState<Scalar> state(result.grid.values.rows(),
                          result.grid.values.cols());
  GradientBuffer<Scalar> grad(result.grid);
  Scalar initial_loss = Scalar(0);
  int blowup_run = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    grad.reset();
    const Scalar loss =
        render_loss(result.grid, views, weights, cfg.render, &grad,
                    cfg.threads);
    result.loss_history.push_back(loss);
    if (iter == 0) initial_loss = loss;
    const bool blown =
        !std::isfinite(loss) || loss > Scalar(10) * initial_loss;
    blowup_run = blown ? blowup_run + 1 : 0;
    if (!std::isfinite(loss) || blowup_run >= 50) {
      throw DivergenceError(
          "fit_grid: diverged at iteration " + std::to_string(iter) +
          " (loss " + std::to_string(static_cast<double>(loss)) +
          ", initial " + std::to_string(static_cast<double>(initial_loss)) +
          ")");
    }
    adam_step(result.grid.values, grad.values, state, cfg);
    require(result.grid.values.allFinite(),
            "fit_grid: non-finite grid values after optimizer step");
  }
  return result;
}

// Peak signal-to-noise ratio for unit-range images, capped at 100 dB so
// identical images compare finitely.
inline constexpr double kPsnrCap = 100.0;

template <typename Scalar>
Scalar psnr(const Image<Scalar>& a, const Image<Scalar>& b) {
  require(same_shape(a, b), "psnr: shape mismatch");
  const Scalar mse = (a.values - b.values).square().mean();
  if (mse <= Scalar(0)) return Scalar(kPsnrCap);
  const Scalar value = Scalar(10) * std::log10(Scalar(1) / mse);
  return std::min(value, Scalar(kPsnrCap));
}

namespace detail {

// 11-tap Gaussian (sigma 1.5), normalized.
template <typename Scalar>
std::array<Scalar, 11> ssim_kernel() {
  std::array<Scalar, 11> k;
  Scalar sum = Scalar(0);
  for (int i = 0; i < 11; ++i) {
    const Scalar x = Scalar(i - 5);
    k[static_cast<size_t>(i)] =
        std::exp(-(x * x) / (Scalar(2) * Scalar(1.5) * Scalar(1.5)));
    sum += k[static_cast<size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
// weighted (not sample-corrected) moments, stability constants for unit
// dynamic range, averaged over window positions fully inside the image and
// over channels.
template <typename Scalar>
Scalar ssim(const Image<Scalar>& a, const Image<Scalar>& b) {
  require(same_shape(a, b), "ssim: shape mismatch");
  require(a.height >= 11 && a.width >= 11,
          "ssim: image smaller than the 11x11 window");
  const auto k = detail::ssim_kernel<Scalar>();
  const Scalar c1 = Scalar(0.01) * Scalar(0.01);
  const Scalar c2 = Scalar(0.03) * Scalar(0.03);
  const int channels = a.channels();
  Scalar channel_sum = Scalar(0);
  for (int ch = 0; ch < channels; ++ch) {
    Scalar acc = Scalar(0);
    int count = 0;
    for (int r = 5; r < a.height - 5; ++r) {
      for (int c = 5; c < a.width - 5; ++c) {
        Scalar mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int dr = -5; dr <= 5; ++dr) {
          for (int dc = -5; dc <= 5; ++dc) {
            const Scalar w = k[static_cast<size_t>(dr + 5)] *
                             k[static_cast<size_t>(dc + 5)];
            const Scalar va = a(r + dr, c + dc, ch);
            const Scalar vb = b(r + dr, c + dc, ch);
            mu_a += w * va;
            mu_b += w * vb;
            aa += w * va * va;
            bb += w * vb * vb;
            // Grouping the symmetric product keeps ssim(a,b) == ssim(b,a)
            // bitwise even when the compiler contracts into FMAs.
            ab += w * (va * vb);
          }
        }
        const Scalar sq_a = mu_a * mu_a;
        const Scalar sq_b = mu_b * mu_b;
        const Scalar mu_ab = mu_a * mu_b;
        const Scalar var_a = aa - sq_a;
        const Scalar var_b = bb - sq_b;
        const Scalar cov = ab - mu_ab;
        acc += ((2 * mu_ab + c1) * (2 * cov + c2)) /
               ((sq_a + sq_b + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
    channel_sum += acc / Scalar(count);
  }
  return channel_sum / Scalar(channels);
}

// Argmax as a stable pure reduction: lowest index wins ties.
template <typename Scalar>
int best_of(const std::vector<Scalar>& scores) {
  require(!scores.empty(), "best_of: no candidates");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)]) {
      best = i;
    }
  }
  return best;
}

}  // namespace voxset
