#pragma once

#include <vector>

#include "hgdrive/tensor.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

// Spatial conventions, used everywhere and documented only here:
//
//  - Ego frame: x points forward, y points left, angles are measured from the
//    +x axis, positive counterclockwise (left). bearing(p) = atan2(p.y, p.x).
//  - BEV grids (occupancy raster, sampled polar features, density map) are
//    row-major (row, col) with the ego at the map's bottom-center facing up:
//    cell (r, c) of an n x n grid with cell size `res` has its center at
//        forward x = (n - r - 0.5) * res
//        left    y = (n/2 - c - 0.5) * res
//    so row 0 is farthest ahead and column 0 is the far left.
//  - Polar grids order rays left-to-right: ray 0 sits at +fov/2, the last ray
//    at -fov/2, uniformly spaced endpoint-inclusive (a single ray sits at 0).
//    Depth cells put centers at radius_k = (k + 0.5) * max_depth / cells.
//  - Image columns run left to right: column 0 shows bearing +fov/2.

inline double bearing(const Vec2& p) { return std::atan2(p.y, p.x); }

// Pinhole camera over a horizontal FOV; focal = (width/2) / tan(fov/2).
struct CameraModel {
  int width = 0;
  int height = 0;
  double fov_deg = 90.0;

  double focal() const;
  // Continuous column coordinate for a bearing (left-positive).
  double col_of_bearing(double bearing_rad) const;
  double col_of_point(const Vec2& p) const { return col_of_bearing(bearing(p)); }
  bool in_view(const Vec2& p) const;
};

CameraModel make_camera(int width, int height, double fov_deg);

// Polar query lattice in front of the ego: `rays` directions spanning the
// FOV, `depth_cells` range bins out to max_depth. Carries a fixed sinusoidal
// position encoding per cell (frequency stack over normalized radius and
// angle).
struct PolarGrid {
  int rays = 0;
  int depth_cells = 0;
  double max_depth_m = 0.0;
  double fov_deg = 0.0;
  int enc_dim = 0;

  double angle_of(int ray) const;
  double radius_of(int k) const;
  int flat(int ray, int k) const { return ray * depth_cells + k; }
  int cell_count() const { return rays * depth_cells; }

  // (rays * depth_cells, enc_dim), constant, ray-major.
  Tensor encodings;
};

PolarGrid build_polar_grid(int rays, int depth_cells, double max_depth_m, double fov_deg,
                           int enc_dim);

// For each cell of a bev_cells x bev_cells grid with `bev_res` meters per
// cell (ego at bottom-center), the flat polar index of the nearest polar
// cell, or -1 when the cell center lies outside the FOV wedge
// (|bearing| > fov/2). Radius and ray indices clamp to the grid.
std::vector<int> bev_to_polar_index(const PolarGrid& grid, int bev_cells, double bev_res);

// Resamples polar-indexed features (cell_count, dim) onto the BEV grid:
// output row (r * bev_cells + c) takes the nearest polar cell's features, or
// zeros outside the FOV wedge. Differentiable: gradients scatter back onto
// the polar cells.
Tensor fov_sample(const Tensor& polar_features, const PolarGrid& grid, int bev_cells,
                  double bev_res);

// Center of BEV cell (r, c) in the ego frame, per the convention above.
Vec2 bev_cell_center(int n, double res, int r, int c);

}  // namespace hgd
