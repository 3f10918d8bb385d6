#pragma once

#include <cstdint>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/decision.hpp"
#include "hgdrive/heads.hpp"
#include "hgdrive/params.hpp"
#include "hgdrive/perception.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

struct ModelInput {
  Tensor image;               // (C,H,W)
  Tensor bev;                 // (Cb,G,G)
  std::vector<Vec2> history;  // history_len past ego positions, oldest first
  Vec2 goal;                  // route end in the ego frame (unclamped)
};

// Sensor encoder + query decoder + output heads, all parameters in one
// registry under the prefixes "perception.", "decision.", "heads.".
struct DrivingModel {
  explicit DrivingModel(const ModelConfig& m, std::uint64_t init_seed = 1);

  ModelConfig cfg;
  ParameterSet params;
  PerceptionEncoder perception;
  DecisionTransformer decision;
  Heads heads;

  Vec2 clamp_goal(const Vec2& g) const;
  Tensor encode(const Tensor& image, const Tensor& bev) const;
  PredictionBundle decode_from(const Tensor& tokens, const std::vector<Vec2>& history,
                               const Vec2& goal) const;
  PredictionBundle forward(const ModelInput& in) const;
};

}  // namespace hgd
