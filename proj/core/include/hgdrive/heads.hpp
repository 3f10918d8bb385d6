#pragma once

#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/decision.hpp"
#include "hgdrive/nn.hpp"
#include "hgdrive/params.hpp"
#include "hgdrive/tensor.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

// Everything the heads produce for one frame. Probabilistic outputs are
// already squashed to (0,1).
struct PredictionBundle {
  Tensor waypoints;  // (3,2) future ego positions, ego frame
  Tensor density;    // (R*R,7): [presence, dx, dy, heading, speed, width, length]
  Tensor traffic;    // (1,3): [light hazard, stop hazard, junction]
  Tensor eye;        // (1,H,W) gaze probability map
  Tensor intention;  // (1,2): [eeg, brake]
};

// Supervision for one frame. Gaze and intention carry presence flags: frames
// from the machine split have neither.
struct HeadTargets {
  std::vector<double> waypoints;  // 3*2
  std::vector<double> density;    // R*R*7, same channel order as predictions
  double light = 0.0;
  double stop = 0.0;
  double junction = 0.0;
  std::vector<double> gaze;  // H*W
  bool has_gaze = false;
  double eeg = 0.0;
  double brake = 0.0;
  bool has_intention = false;
};

// Scalar tensors per objective term plus the weighted total. Terms whose
// weight is zero (or whose target is absent) are left undefined and excluded
// from the total's graph.
struct LossTerms {
  Tensor pt, map, eye, tf, hb;
  Tensor total;
};

struct Heads {
  Heads() = default;
  Heads(ParameterSet& ps, const std::string& prefix, const ModelConfig& m, Rng& rng);

  QuerySlots slots;
  int eye_rows = 0, eye_cols = 0;

  // Waypoints: a GRU primed with the embedded goal, then one step per point.
  // Each step adds the matching decoded trajectory slot to the hidden state,
  // consumes the embedded previous point, and emits an absolute position.
  Linear goal_embed, wp_embed;
  GruCellLayer gru;
  Linear wp_out;

  Linear density_out;            // dec_dim -> 7 per density slot
  Linear traffic_out;            // dec_dim -> 3
  ConvTranspose2dLayer eye_up;   // (dec_dim, eh, ew) -> (1, H, W)
  Linear intention_out;          // dec_dim -> 2

  // decoded (total_slots, dec_dim); goal in the ego frame (already clamped).
  PredictionBundle apply(const Tensor& decoded, const Vec2& goal) const;
};

// Objective:
//   waypoints: L1 summed over the 3 points.
//   density:   0.5*(mean L1 over empty cells + mean L1 over occupied cells)
//              on presence, plus mean L1 of the 6 regression channels over
//              occupied cells.
//   traffic:   weighted binary cross-entropy per flag.
//   eye:       mean squared error over the gaze map.
//   intention: weighted binary cross-entropy for the two labels.
LossTerms compute_loss(const PredictionBundle& pred, const HeadTargets& target,
                       const LossWeights& w);

Waypoints to_waypoints(const Tensor& t);

}  // namespace hgd
