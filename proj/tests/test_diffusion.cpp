// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <voxset/diffusion.hpp>
#include <voxset/rng.hpp>

#include <cmath>
#include <vector>

#include "test_stats.hpp"

using voxset::CameraPose;
using voxset::Image;
using voxset::NoiseSchedule;
using voxset::RenderConfig;
using voxset::Rng;
using voxset::Vec3;
using voxset::Viewset;
using voxset::VoxelGrid;

namespace {

Viewset<double> single_view(const Image<double>& img, int noise_level = 0) {
  Viewset<double> vs;
  vs.images = {img};
  vs.poses = {CameraPose<double>{}};
  vs.noise_levels = {noise_level};
  return vs;
}

}  // namespace

TEST_CASE("cosine schedule endpoints and monotonicity") {
  const auto sched = voxset::cosine_schedule<double>(1000);
  REQUIRE(sched.alpha_bar.size() == 1001);
  REQUIRE(sched.sigma.size() == 1001);
  CHECK(sched.alpha_bar[0] == 1.0);
  CHECK(sched.sigma[0] == 0.0);
  CHECK(sched.sigma[1000] > 0.99);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(sched.sigma[t] > sched.sigma[t - 1]);
    CHECK(sched.alpha_bar[t] < sched.alpha_bar[t - 1]);
    CHECK(sched.alpha_bar[t] > 0.0);
    CHECK(sched.sigma[t] * sched.sigma[t] + sched.alpha_bar[t] ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(voxset::cosine_schedule<double>(0), std::invalid_argument);
}

TEST_CASE("per-step signal destruction is clipped") {
  // The raw cosine ratio collapses near t = T; every kept ratio must stay
  // at or above the 0.001 floor.
  const auto sched = voxset::cosine_schedule<double>(1000);
  for (int t = 1; t <= 1000; ++t) {
    const double ratio = sched.alpha_bar[t] / sched.alpha_bar[t - 1];
    CHECK(ratio >= 0.001 - 1e-12);
  }
}

TEST_CASE("min-SNR weight is the capped signal-to-noise ratio") {
  const auto sched = voxset::cosine_schedule<double>(1000);
  CHECK(voxset::min_snr_weight(0, sched) == 5.0);
  for (int t = 1; t <= 1000; ++t) {
    const double s2 = sched.sigma[t] * sched.sigma[t];
    const double snr = (1.0 - s2) / s2;
    const double w = voxset::min_snr_weight(t, sched);
    CHECK(w == std::min(snr, 5.0));  // exact, same arithmetic both sides
    CHECK(w <= 5.0);
    if (snr < 5.0) CHECK(w == snr);
  }
  // Direct evaluations on a synthetic schedule.
  NoiseSchedule<double> flat;
  flat.steps = 2;
  flat.alpha_bar = {1.0, 0.5, 0.99};
  flat.sigma = {0.0, std::sqrt(0.5), std::sqrt(0.01)};
  CHECK(voxset::min_snr_weight(1, flat) == doctest::Approx(1.0));
  CHECK(voxset::min_snr_weight(2, flat) == doctest::Approx(5.0));
  CHECK_THROWS_AS(voxset::min_snr_weight(3, flat), std::invalid_argument);
}

TEST_CASE("min-SNR weight tends to zero as sigma tends to one") {
  NoiseSchedule<double> sched;
  sched.steps = 1;
  sched.alpha_bar = {1.0, 1e-8};
  sched.sigma = {0.0, std::sqrt(1.0 - 1e-8)};
  CHECK(voxset::min_snr_weight(1, sched) < 1.1e-8);
}

TEST_CASE("unseen weight scales the minimum per-view weight") {
  const auto sched = voxset::cosine_schedule<double>(1000);
  CHECK(voxset::unseen_weight(0.1, {0}, sched) == doctest::Approx(0.5));
  // Pick timesteps whose weights straddle the cap: t=0 gives 5, a late t
  // gives a small weight; the min wins.
  const double w_late = voxset::min_snr_weight(900, sched);
  REQUIRE(w_late < 5.0);
  CHECK(voxset::unseen_weight(0.2, {0, 900}, sched) ==
        doctest::Approx(0.2 * w_late));
  CHECK(voxset::unseen_weight(0.0, {0, 900}, sched) == 0.0);
  CHECK_THROWS_AS(voxset::unseen_weight(0.1, {}, sched),
                  std::invalid_argument);
}

TEST_CASE("noising leaves unmasked views untouched") {
  Rng rng(401);
  const Image<double> img = voxset::gaussian_image<double>(6, 5, 3, rng);
  Viewset<double> vs = single_view(img);
  vs.images.push_back(img);
  vs.poses.push_back(CameraPose<double>{});
  vs.noise_levels.push_back(0);
  const auto sched = voxset::cosine_schedule<double>(1000);
  const auto out = voxset::noise_viewset(vs, 500, {0, 0}, sched, rng);
  CHECK((out.images[0].values == img.values).all());
  CHECK((out.images[1].values == img.values).all());
  CHECK(out.noise_levels[0] == 0);
  CHECK(out.noise_levels[1] == 0);
}

TEST_CASE("noising applies the scheduled mix exactly") {
  // sigma^2 = 0.5, x = 1, eps = 0 -> sqrt(0.5).
  NoiseSchedule<double> sched;
  sched.steps = 1;
  sched.alpha_bar = {1.0, 0.5};
  sched.sigma = {0.0, std::sqrt(0.5)};
  Image<double> x(2, 2, 3);
  x.values.setConstant(1.0);
  Image<double> eps(2, 2, 3);
  eps.values.setZero();
  const auto out =
      voxset::noise_viewset(single_view(x), 1, {1}, {eps}, sched);
  CHECK(out.images[0].values(0, 0) == doctest::Approx(std::sqrt(0.5)));
  CHECK(out.noise_levels[0] == 1);

  Image<double> bad(3, 2, 3);
  bad.values.setZero();
  CHECK_THROWS_AS(
      voxset::noise_viewset(single_view(x), 1, {1}, {bad}, sched),
      std::invalid_argument);
}

TEST_CASE("at the last timestep the noised view is almost pure noise") {
  Rng rng(402);
  const auto sched = voxset::cosine_schedule<double>(1000);
  Image<double> x0(50, 67, 3);  // ~10^4 pixels
  for (Eigen::Index i = 0; i < x0.values.size(); ++i)
    x0.values.data()[i] = rng.normal();
  const auto out =
      voxset::noise_viewset(single_view(x0), 1000, {1}, sched, rng);
  // Sample correlation between x_T and x_0 across all values.
  const auto& a = x0.values;
  const auto& b = out.images[0].values;
  const double ma = a.mean(), mb = b.mean();
  const double cov = ((a - ma) * (b - mb)).mean();
  const double corr =
      cov / std::sqrt(((a - ma).square().mean()) * ((b - mb).square().mean()));
  CHECK(std::abs(corr) < 0.1);
}

TEST_CASE("noising preserves variance for unit-variance inputs") {
  Rng rng(403);
  const auto sched = voxset::cosine_schedule<double>(1000);
  for (int t : {100, 500, 900}) {
    Image<double> x0(187, 187, 3);  // ~10^5 values
    for (Eigen::Index i = 0; i < x0.values.size(); ++i)
      x0.values.data()[i] = rng.normal();
    const auto out = voxset::noise_viewset(single_view(x0), t, {1}, sched, rng);
    const auto& v = out.images[0].values;
    const double var = (v - v.mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("ddim step with t_prev = 0 returns the estimate exactly") {
  Rng rng(404);
  const auto sched = voxset::cosine_schedule<double>(1000);
  const Image<double> xt = voxset::gaussian_image<double>(4, 4, 3, rng);
  const Image<double> x0 = voxset::gaussian_image<double>(4, 4, 3, rng);
  const auto out = voxset::ddim_step(single_view(xt, 4), {x0}, 4, 0, sched);
  CHECK((out.images[0].values == x0.values).all());
  CHECK(out.noise_levels[0] == 0);
}

TEST_CASE("ddim step is consistent for a zero noise estimate") {
  // If x_t = sqrt(alpha_bar_t) x0 the implied noise is zero, so the step
  // lands on sqrt(alpha_bar_prev) x0.
  Rng rng(405);
  const auto sched = voxset::cosine_schedule<double>(1000);
  const Image<double> x0 = voxset::gaussian_image<double>(4, 4, 3, rng);
  const int t = 600, t_prev = 400;
  Image<double> xt = x0;
  xt.values *= std::sqrt(sched.alpha_bar[t]);
  const auto out = voxset::ddim_step(single_view(xt, t), {x0}, t, t_prev, sched);
  const voxset::ChannelArray<double> expected =
      std::sqrt(sched.alpha_bar[t_prev]) * x0.values;
  CHECK((out.images[0].values - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(out.noise_levels[0] == t_prev);
}

TEST_CASE("ddim step rejects bad timesteps and stale views") {
  Rng rng(406);
  const auto sched = voxset::cosine_schedule<double>(1000);
  const Image<double> img = voxset::gaussian_image<double>(4, 4, 3, rng);
  CHECK_THROWS_AS(
      voxset::ddim_step(single_view(img, 5), {img}, 5, 5, sched),
      std::invalid_argument);
  // Noised view whose recorded level is not t.
  CHECK_THROWS_AS(
      voxset::ddim_step(single_view(img, 7), {img}, 5, 3, sched),
      std::invalid_argument);
}

TEST_CASE("oracle denoiser walks the full trajectory back to x0") {
  // When the estimate always equals the true clean image, chaining DDIM
  // steps down the strided schedule must reproduce x0 almost exactly.
  Rng rng(407);
  const auto sched = voxset::cosine_schedule<double>(1000);
  const auto ts = voxset::inference_timesteps(1000, 250);
  Image<double> x0(8, 8, 3);
  for (Eigen::Index i = 0; i < x0.values.size(); ++i)
    x0.values.data()[i] = rng.uniform(0.0, 1.0);
  const Image<double> eps = voxset::gaussian_image<double>(8, 8, 3, rng);

  Viewset<double> vs = single_view(x0);
  Image<double> xt = x0;
  xt.values = std::sqrt(sched.alpha_bar[1000]) * x0.values +
              sched.sigma[1000] * eps.values;
  vs.images[0] = xt;
  vs.noise_levels[0] = 1000;

  for (size_t i = 0; i + 1 < ts.size(); ++i)
    vs = voxset::ddim_step(vs, {x0}, ts[i], ts[i + 1], sched);

  CHECK(vs.noise_levels[0] == 0);
  CHECK((vs.images[0].values - x0.values).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("inference timesteps stride uniformly from T to 0") {
  const auto ts = voxset::inference_timesteps(1000, 250);
  REQUIRE(ts.size() == 251);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 0);
  for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] == ts[i - 1] - 4);
  const auto coarse = voxset::inference_timesteps(1000, 3);
  CHECK(coarse == std::vector<int>{1000, 667, 333, 0});
  CHECK_THROWS_AS(voxset::inference_timesteps(10, 11), std::invalid_argument);
}

TEST_CASE("noise state frequencies match their probabilities") {
  Rng rng(408);
  voxset::NoiseStateSampler<double> sampler;
  const std::size_t draws = 10000;
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (std::size_t i = 0; i < draws; ++i)
    ++counts[static_cast<size_t>(sampler.sample(rng))];
  const std::array<double, 3> probs{0.45, 0.45, 0.1};
  for (int k = 0; k < 3; ++k) {
    const double expected = probs[k] * draws;
    const double sigma = std::sqrt(draws * probs[k] * (1.0 - probs[k]));
    CHECK(std::abs(double(counts[k]) - expected) < 3.0 * sigma);
  }

  voxset::NoiseStateSampler<double> bad;
  bad.probabilities = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(bad.sample(rng), std::invalid_argument);
}

TEST_CASE("sample_loop with an oracle denoiser reproduces its renders") {
  Rng rng(409);
  VoxelGrid<double> target(8);
  for (Eigen::Index i = 0; i < target.values.rows(); ++i)
    for (int c = 0; c < 4; ++c) target.values(i, c) = rng.uniform(-2.0, 2.0);

  const auto sched = voxset::cosine_schedule<double>(1000);
  RenderConfig<double> cfg;
  cfg.samples_per_ray = 16;
  const int hw = 12;

  std::vector<CameraPose<double>> gen_poses{
      voxset::look_at(Vec3<double>(2, 0.5, 0.3), Vec3<double>(0, 0, 0), 1.1,
                      1.1),
      voxset::look_at(Vec3<double>(-1.4, 0.8, 1.2), Vec3<double>(0, 0, 0), 1.1,
                      1.1)};

  // Conditioning: one clean render from a third viewpoint.
  const CameraPose<double> cond_pose =
      voxset::look_at(Vec3<double>(0.3, 1.9, -0.4), Vec3<double>(0, 0, 0), 1.1,
                      1.1);
  Viewset<double> conditioning;
  conditioning.images = {voxset::render(target, cond_pose, hw, hw, cfg)};
  conditioning.poses = {cond_pose};
  conditioning.noise_levels = {0};
  const voxset::ChannelArray<double> cond_copy = conditioning.images[0].values;

  const voxset::Denoiser<double> oracle =
      [&](const Viewset<double>&, const std::vector<int>&) { return target; };

  const auto result = voxset::sample_loop(oracle, sched, 50, conditioning,
                                          gen_poses, hw, hw, cfg, rng);

  REQUIRE(result.viewset.size() == 3);
  // The clean view is bit-identical, not merely close.
  CHECK((result.viewset.images[0].values == cond_copy).all());
  CHECK(result.viewset.noise_levels == std::vector<int>{0, 0, 0});
  for (int v = 1; v < 3; ++v) {
    const Image<double> expected =
        voxset::render(target, result.viewset.poses[v], hw, hw, cfg);
    CHECK((result.viewset.images[v].values - expected.values)
              .cwiseAbs()
              .maxCoeff() < 1e-4);
  }

  CHECK_THROWS_AS(voxset::sample_loop(oracle, sched, 50, conditioning, {}, hw,
                                      hw, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("sample_loop unconditional path needs no clean views") {
  Rng rng(410);
  VoxelGrid<double> target(6);
  target.values.col(0).setConstant(3.0);
  target.values.col(1).setConstant(1.0);
  const auto sched = voxset::cosine_schedule<double>(100);
  RenderConfig<double> cfg;
  cfg.samples_per_ray = 8;
  const voxset::Denoiser<double> oracle =
      [&](const Viewset<double>&, const std::vector<int>&) { return target; };
  std::vector<CameraPose<double>> poses{
      voxset::look_at(Vec3<double>(2, 0, 0), Vec3<double>(0, 0, 0), 1.1, 1.1)};
  const auto result = voxset::sample_loop(oracle, sched, 10, Viewset<double>{},
                                          poses, 8, 8, cfg, rng);
  const Image<double> expected = voxset::render(target, poses[0], 8, 8, cfg);
  CHECK((result.viewset.images[0].values - expected.values)
            .cwiseAbs()
            .maxCoeff() < 1e-4);
}
