#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/model.hpp"
#include "hgdrive/simdata.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

// What a driving policy sees each step: the rendered sensors plus the same
// history/goal the training frames carry. `world` is privileged state for
// scripted policies; learned policies must not read it.
struct StepContext {
  const World& world;
  Tensor image;
  Tensor bev;
  std::vector<Vec2> history;
  Vec2 goal;
  double dt = 0.0;
};

using Policy = std::function<Waypoints(const StepContext&)>;
// Fresh policy per episode so stateful policies reset deterministically.
using PolicyFactory = std::function<Policy(std::uint64_t episode_seed)>;

PolicyFactory expert_policy_factory(const SimConfig& sim);
PolicyFactory random_policy_factory();
PolicyFactory model_policy_factory(const DrivingModel& model);

struct InfractionEvent {
  std::string kind;  // collision | red_light | stop_sign | off_route
  double t = 0.0;
};

struct EpisodeResult {
  std::uint64_t world_seed = 0;
  double completion_pct = 0.0;
  double infraction_product = 1.0;
  std::string termination;  // completed | timeout | blocked | off_route | bad_prediction
  double driven_m = 0.0;
  double duration_s = 0.0;
  std::vector<InfractionEvent> events;
};

struct EvalReport {
  std::string policy;
  double route_completion = 0.0;  // mean completion percent
  double infraction_score = 0.0;  // mean penalty product
  double driving_score = 0.0;     // mean per-episode completion*product
  std::vector<EpisodeResult> episodes;
};

EpisodeResult run_episode(const RunConfig& cfg, std::uint64_t world_seed,
                          const PolicyFactory& factory);

// Aggregate metrics: mean completion percent, mean penalty product, and mean
// per-episode completion*product.
double route_completion(const std::vector<EpisodeResult>& episodes);
double infraction_score(const std::vector<EpisodeResult>& episodes);
double driving_score(const std::vector<EpisodeResult>& episodes);

// routes*seeds episodes on derived world seeds, optionally across threads
// (identical results for any jobs value).
EvalReport evaluate_policy(const RunConfig& cfg, const std::string& policy_name,
                           const PolicyFactory& factory);

std::string report_to_json(const EvalReport& report);

}  // namespace hgd
