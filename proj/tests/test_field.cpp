// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <voxset/field.hpp>
#include <voxset/rng.hpp>

#include <cmath>

using voxset::GradientBuffer;
using voxset::Rng;
using voxset::Vec3;
using voxset::VoxelGrid;

namespace {

VoxelGrid<double> random_grid(Rng& rng, int side) {
  VoxelGrid<double> grid(side);
  for (Eigen::Index i = 0; i < grid.values.rows(); ++i)
    for (int c = 0; c < 4; ++c) grid.values(i, c) = rng.uniform(-3.0, 3.0);
  return grid;
}

}  // namespace

TEST_CASE("construction validates side and extent") {
  CHECK_THROWS_AS(VoxelGrid<double>(1), std::invalid_argument);
  CHECK_THROWS_AS(VoxelGrid<double>(4, -0.5), std::invalid_argument);
  VoxelGrid<double> grid(4);
  CHECK(grid.values.rows() == 64);
  CHECK(grid.values.cols() == 4);
  CHECK(grid.values.isZero());
}

TEST_CASE("lattice coordinates invert node positions") {
  VoxelGrid<double> grid(5, 0.6);
  for (int i = 0; i < 5; ++i) {
    const Vec3<double> p = grid.node_position(i, 0, 0);
    CHECK(grid.lattice_coord(p.x()) == doctest::Approx(double(i)).epsilon(1e-12));
  }
  CHECK(grid.node_position(0, 0, 0).x() == doctest::Approx(-0.6));
  CHECK(grid.node_position(4, 4, 4).maxCoeff() == doctest::Approx(0.6));
}

TEST_CASE("sampling at a node returns that node's activated values") {
  Rng rng(201);
  VoxelGrid<double> grid = random_grid(rng, 4);
  for (int ix = 0; ix < 4; ++ix) {
    for (int iz = 0; iz < 4; ++iz) {
      const auto row = grid.node_row(ix, 2, iz);
      const auto s = voxset::sample(grid, grid.node_position(ix, 2, iz));
      CHECK(s.density == doctest::Approx(voxset::softplus(
                             grid.values(row, 0) + grid.density_bias))
                             .epsilon(1e-12));
      for (int c = 0; c < 3; ++c)
        CHECK(s.rgb[c] == doctest::Approx(voxset::sigmoid(grid.values(row, 1 + c)))
                              .epsilon(1e-12));
    }
  }
}

TEST_CASE("interpolation is linear in raw values before activation") {
  VoxelGrid<double> grid(4);
  const double a = 1.25, b = -0.75;
  grid.values(grid.node_row(1, 2, 2), 0) = a;
  grid.values(grid.node_row(2, 2, 2), 0) = b;
  const Vec3<double> mid =
      0.5 * (grid.node_position(1, 2, 2) + grid.node_position(2, 2, 2));
  const auto s = voxset::sample(grid, mid);
  CHECK(s.density ==
        doctest::Approx(voxset::softplus(0.5 * (a + b) + grid.density_bias))
            .epsilon(1e-12));
}

TEST_CASE("points far outside the cube see only padding") {
  Rng rng(202);
  VoxelGrid<double> grid = random_grid(rng, 4);
  for (const auto& q : {Vec3<double>(100, 50, -80), Vec3<double>(0, -9, 0),
                        Vec3<double>(2, 2, 2)}) {
    const auto s = voxset::sample(grid, q);
    CHECK(s.density ==
          doctest::Approx(voxset::softplus(-10.0 + grid.density_bias)));
    CHECK(s.density < 1e-4);
    for (int c = 0; c < 3; ++c) CHECK(s.rgb[c] == doctest::Approx(0.5));
  }
}

TEST_CASE("activation ranges hold everywhere") {
  Rng rng(203);
  VoxelGrid<double> grid(6);
  for (Eigen::Index i = 0; i < grid.values.rows(); ++i)
    for (int c = 0; c < 4; ++c) grid.values(i, c) = rng.uniform(-20.0, 20.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3<double> q(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                         rng.uniform(-1.5, 1.5));
    const auto s = voxset::sample(grid, q);
    CHECK(s.density >= 0.0);
    for (int c = 0; c < 3; ++c) {
      CHECK(s.rgb[c] >= 0.0);
      CHECK(s.rgb[c] <= 1.0);
    }
  }
}

TEST_CASE("sample is continuous, including across the cube boundary") {
  Rng rng(204);
  VoxelGrid<double> grid = random_grid(rng, 4);
  const double h = 1e-6;
  // Raw values in [-3,3] over cells of size 0.4 bound the density slope.
  const double lipschitz = 100.0;
  for (int i = 0; i < 300; ++i) {
    Vec3<double> q(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7),
                   rng.uniform(-0.7, 0.7));
    if (i % 3 == 0) q.x() = 0.6 + rng.uniform(-2.0 * h, 2.0 * h);
    Vec3<double> dq(rng.normal(), rng.normal(), rng.normal());
    dq *= h / dq.norm();
    const auto s0 = voxset::sample(grid, q);
    const auto s1 = voxset::sample(grid, Vec3<double>(q + dq));
    CHECK(std::abs(s1.density - s0.density) < lipschitz * h);
    CHECK((s1.rgb - s0.rgb).cwiseAbs().maxCoeff() < lipschitz * h);
  }
}

TEST_CASE("gradient at a node lands on that node only") {
  Rng rng(205);
  VoxelGrid<double> grid = random_grid(rng, 4);
  GradientBuffer<double> grad(grid);
  const Vec3<double> q = grid.node_position(2, 1, 3);
  voxset::sample_backward(grid, q, 1.0, Vec3<double>(0.25, -0.5, 2.0), grad);

  const auto row = grid.node_row(2, 1, 3);
  for (Eigen::Index i = 0; i < grad.values.rows(); ++i) {
    if (i == row) continue;
    CHECK(grad.values.row(i).cwiseAbs().maxCoeff() == 0.0);
  }
  const double raw0 = grid.values(row, 0) + grid.density_bias;
  CHECK(grad.values(row, 0) == doctest::Approx(voxset::sigmoid(raw0)));
  for (int c = 0; c < 3; ++c) {
    const double s = voxset::sigmoid(grid.values(row, 1 + c));
    const double upstream = c == 0 ? 0.25 : (c == 1 ? -0.5 : 2.0);
    CHECK(grad.values(row, 1 + c) == doctest::Approx(upstream * s * (1.0 - s)));
  }
}

TEST_CASE("zero upstream gradient contributes nothing") {
  Rng rng(206);
  VoxelGrid<double> grid = random_grid(rng, 4);
  GradientBuffer<double> grad(grid);
  voxset::sample_backward(grid, Vec3<double>(0.1, -0.2, 0.3), 0.0,
                          Vec3<double>(0, 0, 0), grad);
  CHECK(grad.values.isZero());
}

TEST_CASE("sample_backward matches central differences") {
  Rng rng(207);
  const double h = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    VoxelGrid<double> grid = random_grid(rng, 4);
    const Vec3<double> q(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                         rng.uniform(-0.8, 0.8));
    const double d_density = rng.normal();
    const Vec3<double> d_rgb(rng.normal(), rng.normal(), rng.normal());
    const auto scalar_loss = [&](const VoxelGrid<double>& g) {
      const auto s = voxset::sample(g, q);
      return d_density * s.density + d_rgb.dot(s.rgb);
    };

    GradientBuffer<double> grad(grid);
    voxset::sample_backward(grid, q, d_density, d_rgb, grad);

    for (Eigen::Index i = 0; i < grid.values.rows(); ++i) {
      for (int c = 0; c < 4; ++c) {
        VoxelGrid<double> gp = grid;
        VoxelGrid<double> gm = grid;
        gp.values(i, c) += h;
        gm.values(i, c) -= h;
        const double fd = (scalar_loss(gp) - scalar_loss(gm)) / (2.0 * h);
        const double an = grad.values(i, c);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        CHECK(std::abs(fd - an) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("gradient buffers merge additively") {
  Rng rng(208);
  VoxelGrid<double> grid = random_grid(rng, 4);
  GradientBuffer<double> a(grid), b(grid), both(grid);
  const Vec3<double> q1(0.1, 0.2, -0.3), q2(-0.4, 0.0, 0.25);
  voxset::sample_backward(grid, q1, 1.0, Vec3<double>(1, 2, 3), a);
  voxset::sample_backward(grid, q2, -0.5, Vec3<double>(0, 1, 0), b);
  voxset::sample_backward(grid, q1, 1.0, Vec3<double>(1, 2, 3), both);
  voxset::sample_backward(grid, q2, -0.5, Vec3<double>(0, 1, 0), both);
  a.merge(b);
  CHECK((a.values - both.values).cwiseAbs().maxCoeff() < 1e-15);

  GradientBuffer<double> wrong(VoxelGrid<double>(3));
  CHECK_THROWS_AS(a.merge(wrong), std::invalid_argument);
}
