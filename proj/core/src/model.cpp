#include "hgdrive/model.hpp"

#include <cmath>

#include "hgdrive/rng.hpp"

namespace hgd {

DrivingModel::DrivingModel(const ModelConfig& m, std::uint64_t init_seed) : cfg(m) {
  cfg.validate();
  Rng rng(init_seed);
  perception = PerceptionEncoder(params, "perception", cfg, rng);
  decision = DecisionTransformer(params, "decision", cfg, rng);
  heads = Heads(params, "heads", cfg, rng);
}

Vec2 DrivingModel::clamp_goal(const Vec2& g) const {
  double n = g.norm();
  if (n <= cfg.goal_clamp_m || n == 0.0) return g;
  return g * (cfg.goal_clamp_m / n);
}

Tensor DrivingModel::encode(const Tensor& image, const Tensor& bev) const {
  return perception.apply(image, bev);
}

PredictionBundle DrivingModel::decode_from(const Tensor& tokens, const std::vector<Vec2>& history,
                                           const Vec2& goal) const {
  Tensor decoded = decision.decode(tokens, history);
  return heads.apply(decoded, clamp_goal(goal));
}

PredictionBundle DrivingModel::forward(const ModelInput& in) const {
  return decode_from(encode(in.image, in.bev), in.history, in.goal);
}

}  // namespace hgd
