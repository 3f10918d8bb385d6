#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "hgdrive/geometry.hpp"
#include "hgdrive/ops.hpp"

using namespace hgd;

namespace {

// Independent mapping oracle: nearest ray by exhaustive angle comparison,
// nearest depth bin by exhaustive center comparison, boundary-inclusive
// wedge. No shared index arithmetic with the library.
std::vector<int> brute_force_index(const PolarGrid& g, int n, double res) {
  std::vector<int> idx(static_cast<std::size_t>(n) * n, -1);
  double half = deg2rad(g.fov_deg) / 2.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      Vec2 p = bev_cell_center(n, res, r, c);
      double b = bearing(p);
      if (std::abs(b) > half) continue;
      int best_ray = 0;
      double best_da = 1e300;
      for (int i = 0; i < g.rays; ++i) {
        double da = std::abs(g.angle_of(i) - b);
        if (da < best_da) {
          best_da = da;
          best_ray = i;
        }
      }
      double radius = p.norm();
      int best_k = 0;
      double best_dr = 1e300;
      for (int k = 0; k < g.depth_cells; ++k) {
        double dr = std::abs(g.radius_of(k) - radius);
        if (dr < best_dr) {
          best_dr = dr;
          best_k = k;
        }
      }
      idx[static_cast<std::size_t>(r) * n + c] = g.flat(best_ray, best_k);
    }
  return idx;
}

}  // namespace

TEST_CASE("camera focal length and column mapping") {
  CameraModel cam = make_camera(64, 32, 90.0);
  CHECK(cam.focal() == doctest::Approx(32.0).epsilon(1e-12));
  // Left edge of the FOV lands on column 0, straight ahead on the center.
  CHECK(cam.col_of_bearing(deg2rad(45.0)) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(cam.col_of_bearing(0.0) == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(cam.col_of_bearing(deg2rad(-45.0)) == doctest::Approx(64.0).epsilon(1e-9));
  CHECK(cam.col_of_point({10.0, 10.0}) == doctest::Approx(0.0).epsilon(1e-9));

  CHECK(cam.in_view({5.0, 0.0}));
  CHECK(cam.in_view({5.0, 5.0}));       // exactly on the wedge edge
  CHECK_FALSE(cam.in_view({5.0, 6.0}));
  CHECK_FALSE(cam.in_view({-5.0, 0.0}));
  CHECK_THROWS_AS(make_camera(0, 32, 90.0), ShapeError);
  CHECK_THROWS_AS(make_camera(64, 32, 240.0), ShapeError);
}

TEST_CASE("polar grid angles and radii") {
  PolarGrid g = build_polar_grid(5, 4, 8.0, 90.0, 8);
  // Rays sweep left to right, endpoint inclusive.
  CHECK(g.angle_of(0) == doctest::Approx(deg2rad(45.0)));
  CHECK(g.angle_of(2) == doctest::Approx(0.0));
  CHECK(g.angle_of(4) == doctest::Approx(deg2rad(-45.0)));
  // Bin centers at (k + 0.5) * depth_step.
  CHECK(g.radius_of(0) == doctest::Approx(1.0));
  CHECK(g.radius_of(1) == doctest::Approx(3.0));
  CHECK(g.radius_of(2) == doctest::Approx(5.0));
  CHECK(g.radius_of(3) == doctest::Approx(7.0));
  CHECK(g.cell_count() == 20);
  CHECK(g.flat(1, 2) == 6);
  CHECK(g.encodings.shape() == Shape{20, 8});
  for (double v : g.encodings.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  PolarGrid single = build_polar_grid(1, 2, 4.0, 60.0, 4);
  CHECK(single.angle_of(0) == doctest::Approx(0.0));

  CHECK_THROWS_AS(build_polar_grid(0, 4, 8.0, 90.0, 8), ShapeError);
  CHECK_THROWS_AS(build_polar_grid(4, 4, 8.0, 90.0, 6), ShapeError);
  CHECK_THROWS_AS(build_polar_grid(4, 4, -1.0, 90.0, 8), ShapeError);
}

TEST_CASE("bev cell centers follow the bottom-center convention") {
  // 4x4 grid, 2 m cells: row 0 is farthest ahead, column 0 far left.
  Vec2 p00 = bev_cell_center(4, 2.0, 0, 0);
  CHECK(p00.x == doctest::Approx(7.0));
  CHECK(p00.y == doctest::Approx(3.0));
  Vec2 p33 = bev_cell_center(4, 2.0, 3, 3);
  CHECK(p33.x == doctest::Approx(1.0));
  CHECK(p33.y == doctest::Approx(-3.0));
}

TEST_CASE("bev to polar mapping matches the brute force oracle") {
  // All grid sizes up to 32 at every supported wedge width. Cell centers sit
  // at half-integer multiples of the resolution, so no center is equidistant
  // from two depth bins, and with 16 rays none is equidistant from two rays.
  for (double fov : {60.0, 90.0, 120.0, 180.0}) {
    PolarGrid g = build_polar_grid(16, 8, 10.0, fov, 8);
    for (int n = 1; n <= 32; ++n) {
      std::vector<int> got = bev_to_polar_index(g, n, 1.25);
      std::vector<int> want = brute_force_index(g, n, 1.25);
      REQUIRE_MESSAGE(got == want,
                      "fov " << fov << " grid " << n << "x" << n);
    }
  }
}

TEST_CASE("cells outside the wedge map to nothing and far cells clamp") {
  PolarGrid g = build_polar_grid(16, 8, 10.0, 90.0, 8);
  int n = 32;
  double res = 1.25;  // grid reaches ~40 m, four times the polar depth
  std::vector<int> idx = bev_to_polar_index(g, n, res);
  int outside = 0, clamped = 0;
  double half = deg2rad(45.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      Vec2 p = bev_cell_center(n, res, r, c);
      int v = idx[static_cast<std::size_t>(r) * n + c];
      if (std::abs(bearing(p)) > half) {
        CHECK(v == -1);
        ++outside;
      } else {
        CHECK(v >= 0);
        CHECK(v < g.cell_count());
        if (p.norm() > g.max_depth_m) {
          CHECK(v % g.depth_cells == g.depth_cells - 1);
          ++clamped;
        }
      }
    }
  CHECK(outside > 0);
  CHECK(clamped > 0);
}

TEST_CASE("fov_sample copies mapped rows and zeroes the rest") {
  PolarGrid g = build_polar_grid(9, 4, 8.0, 120.0, 8);
  int n = 8;
  double res = 1.5;
  int dim = 3;
  std::vector<double> fv(static_cast<std::size_t>(g.cell_count()) * dim);
  for (int i = 0; i < g.cell_count(); ++i)
    for (int d = 0; d < dim; ++d) fv[static_cast<std::size_t>(i) * dim + d] = i * 10.0 + d;
  Tensor features = Tensor::from({g.cell_count(), dim}, fv);
  Tensor out = fov_sample(features, g, n, res);
  CHECK(out.shape() == Shape{n * n, dim});

  std::vector<int> idx = brute_force_index(g, n, res);
  for (int cell = 0; cell < n * n; ++cell)
    for (int d = 0; d < dim; ++d) {
      double want = idx[cell] < 0 ? 0.0 : idx[cell] * 10.0 + d;
      CHECK(out.at(cell, d) == want);  // pure copy, exact
    }

  CHECK_THROWS_AS(fov_sample(Tensor::zeros({3, 3}), g, n, res), ShapeError);
}

TEST_CASE("fov_sample routes gradients back onto polar cells") {
  PolarGrid g = build_polar_grid(9, 4, 8.0, 120.0, 8);
  int n = 6;
  double res = 1.0;
  Tensor features = Tensor::zeros({g.cell_count(), 2});
  features.mark_param();
  backward(sum_all(fov_sample(features, g, n, res)));
  std::vector<double> grad = features.grad();

  std::vector<int> counts(g.cell_count(), 0);
  for (int v : brute_force_index(g, n, res))
    if (v >= 0) ++counts[v];
  for (int i = 0; i < g.cell_count(); ++i)
    for (int d = 0; d < 2; ++d)
      CHECK(grad[static_cast<std::size_t>(i) * 2 + d] == doctest::Approx(counts[i]));
}
