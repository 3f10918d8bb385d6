#include "hgdrive/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "hgdrive/ops.hpp"

namespace hgd {

double CameraModel::focal() const {
  if (fov_deg <= 0.0 || fov_deg >= 180.0) {
    throw ShapeError("CameraModel::focal: fov must be in (0,180), got " + std::to_string(fov_deg));
  }
  return (width / 2.0) / std::tan(deg2rad(fov_deg) / 2.0);
}

double CameraModel::col_of_bearing(double bearing_rad) const {
  return width / 2.0 - focal() * std::tan(bearing_rad);
}

bool CameraModel::in_view(const Vec2& p) const {
  if (p.x <= 0.0) return false;
  return std::abs(bearing(p)) <= deg2rad(fov_deg) / 2.0;
}

CameraModel make_camera(int width, int height, double fov_deg) {
  if (width <= 0 || height <= 0) {
    throw ShapeError("make_camera: bad raster " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  if (fov_deg <= 0.0 || fov_deg > 180.0) {
    throw ShapeError("make_camera: fov out of (0,180]: " + std::to_string(fov_deg));
  }
  return CameraModel{width, height, fov_deg};
}

double PolarGrid::angle_of(int ray) const {
  double half = deg2rad(fov_deg) / 2.0;
  if (rays == 1) return 0.0;
  return half - ray * (2.0 * half) / (rays - 1);
}

double PolarGrid::radius_of(int k) const {
  return (k + 0.5) * max_depth_m / depth_cells;
}

PolarGrid build_polar_grid(int rays, int depth_cells, double max_depth_m, double fov_deg,
                           int enc_dim) {
  if (rays < 1 || depth_cells < 1) {
    throw ShapeError("build_polar_grid: need at least one ray and depth cell");
  }
  if (max_depth_m <= 0.0) throw ShapeError("build_polar_grid: max_depth must be positive");
  if (fov_deg <= 0.0 || fov_deg > 180.0) {
    throw ShapeError("build_polar_grid: fov out of (0,180]: " + std::to_string(fov_deg));
  }
  if (enc_dim < 4 || enc_dim % 4 != 0) {
    throw ShapeError("build_polar_grid: enc_dim must be a positive multiple of 4");
  }
  PolarGrid g;
  g.rays = rays;
  g.depth_cells = depth_cells;
  g.max_depth_m = max_depth_m;
  g.fov_deg = fov_deg;
  g.enc_dim = enc_dim;

  double half = deg2rad(fov_deg) / 2.0;
  std::vector<double> enc(static_cast<std::size_t>(g.cell_count()) * enc_dim);
  for (int ray = 0; ray < rays; ++ray) {
    double an = half > 0.0 ? g.angle_of(ray) / half : 0.0;  // [-1, 1]
    for (int k = 0; k < depth_cells; ++k) {
      double rn = g.radius_of(k) / max_depth_m;  // (0, 1)
      double* row = &enc[static_cast<std::size_t>(g.flat(ray, k)) * enc_dim];
      for (int j = 0; j < enc_dim / 4; ++j) {
        double freq = std::pow(2.0, j) * kPi;
        row[4 * j + 0] = std::sin(freq * rn);
        row[4 * j + 1] = std::cos(freq * rn);
        row[4 * j + 2] = std::sin(freq * an);
        row[4 * j + 3] = std::cos(freq * an);
      }
    }
  }
  g.encodings = Tensor::from({g.cell_count(), enc_dim}, std::move(enc));
  return g;
}

Vec2 bev_cell_center(int n, double res, int r, int c) {
  return {(n - r - 0.5) * res, (n / 2.0 - c - 0.5) * res};
}

std::vector<int> bev_to_polar_index(const PolarGrid& grid, int bev_cells, double bev_res) {
  if (bev_cells < 1 || bev_res <= 0.0) {
    throw ShapeError("bev_to_polar_index: bad grid " + std::to_string(bev_cells) + " cells at " +
                     std::to_string(bev_res) + " m");
  }
  double half = deg2rad(grid.fov_deg) / 2.0;
  double depth_step = grid.max_depth_m / grid.depth_cells;
  double ray_step = grid.rays > 1 ? (2.0 * half) / (grid.rays - 1) : 0.0;
  std::vector<int> idx(static_cast<std::size_t>(bev_cells) * bev_cells, -1);
  for (int r = 0; r < bev_cells; ++r) {
    for (int c = 0; c < bev_cells; ++c) {
      Vec2 p = bev_cell_center(bev_cells, bev_res, r, c);
      double b = bearing(p);
      if (std::abs(b) > half) continue;
      int ray = 0;
      if (grid.rays > 1) {
        // Nearest ray by angular distance; cells exactly between two rays
        // take the lower index so the choice is stable across platforms.
        int base = static_cast<int>(std::floor((half - b) / ray_step));
        ray = std::max(0, std::min(grid.rays - 1, base));
        double best = std::abs(grid.angle_of(ray) - b);
        for (int cand = base; cand <= base + 1; ++cand) {
          int i = std::max(0, std::min(grid.rays - 1, cand));
          double d = std::abs(grid.angle_of(i) - b);
          if (d < best) {
            best = d;
            ray = i;
          }
        }
      }
      int k = static_cast<int>(std::floor(p.norm() / depth_step));
      k = std::max(0, std::min(grid.depth_cells - 1, k));
      idx[static_cast<std::size_t>(r) * bev_cells + c] = grid.flat(ray, k);
    }
  }
  return idx;
}

Tensor fov_sample(const Tensor& polar_features, const PolarGrid& grid, int bev_cells,
                  double bev_res) {
  if (!polar_features.defined() || polar_features.shape().size() != 2 ||
      polar_features.dim(0) != grid.cell_count()) {
    throw ShapeError("fov_sample: features must be (" + std::to_string(grid.cell_count()) +
                     ",dim), got " +
                     (polar_features.defined() ? shape_str(polar_features.shape())
                                               : std::string("undefined")));
  }
  return gather_rows_or_zero(polar_features, bev_to_polar_index(grid, bev_cells, bev_res));
}

}  // namespace hgd
