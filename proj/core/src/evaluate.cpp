#include "hgdrive/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <memory>
#include <thread>

#include "hgdrive/control.hpp"
#include "json.hpp"

namespace hgd {
namespace {

constexpr double kEgoRadius = 1.0;
constexpr double kCollisionCooldownS = 5.0;
constexpr double kProgressEps = 0.5;
constexpr double kFinishMarginM = 2.0;

double point_obb_distance(const Vec2& p, const Vec2& center, double heading, double half_l,
                          double half_w) {
  Vec2 q = rotate(p - center, -heading);
  double dx = q.x - clamp(q.x, -half_l, half_l);
  double dy = q.y - clamp(q.y, -half_w, half_w);
  return std::sqrt(dx * dx + dy * dy);
}

bool finite_waypoints(const Waypoints& wp) {
  for (const Vec2& p : wp)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  return true;
}

}  // namespace

PolicyFactory expert_policy_factory(const SimConfig& sim) {
  return [sim](std::uint64_t) -> Policy {
    return [sim](const StepContext& ctx) {
      ExpertDecision d = expert_drive(ctx.world, sim);
      return expert_waypoints(ctx.world, sim, d.desired_v);
    };
  };
}

PolicyFactory random_policy_factory() {
  return [](std::uint64_t seed) -> Policy {
    auto rng = std::make_shared<Rng>(Rng(seed).derive("random_policy"));
    return [rng](const StepContext&) {
      double bearing = rng->uniform(-deg2rad(30.0), deg2rad(30.0));
      double step = rng->uniform(0.5, 2.5);
      Waypoints wp;
      for (int k = 0; k < 3; ++k) wp[k] = rotate({step * (k + 1), 0.0}, bearing);
      return wp;
    };
  };
}

PolicyFactory model_policy_factory(const DrivingModel& model) {
  const DrivingModel* mp = &model;
  return [mp](std::uint64_t) -> Policy {
    return [mp](const StepContext& ctx) {
      NoGradGuard ng;
      ModelInput in{ctx.image, ctx.bev, ctx.history, ctx.goal};
      return to_waypoints(mp->forward(in).waypoints);
    };
  };
}

EpisodeResult run_episode(const RunConfig& cfg, std::uint64_t world_seed,
                          const PolicyFactory& factory) {
  Rng wrng(world_seed);
  World w = make_benchmark_world(cfg.sim, cfg.eval, wrng);
  Policy policy = factory(world_seed);
  PidState pid;

  double dt = 1.0 / cfg.sim.frame_rate_hz;
  int max_steps = static_cast<int>(std::ceil(cfg.eval.max_duration_s * cfg.sim.frame_rate_hz));
  double route_len = w.route.length();
  double finish_s = std::max(0.0, route_len - kFinishMarginM);

  EpisodeResult res;
  res.world_seed = world_seed;

  std::vector<Vec2> past;
  std::vector<double> last_hit(w.agents.size(), -1e9);
  double max_s = 0.0, prev_s = 0.0, last_prog_s = 0.0, last_prog_t = 0.0;
  w.route.project(w.ego.pos, &prev_s, nullptr);

  std::string term;
  for (int step = 0; step < max_steps && term.empty(); ++step) {
    StepContext ctx{w, render_image(w, cfg.model), render_bev(w, cfg.model), {}, {}, dt};
    for (int k = cfg.model.history_len; k >= 1; --k) {
      int idx = static_cast<int>(past.size()) - k;
      ctx.history.push_back(idx >= 0 ? w.to_ego(past[idx]) : Vec2{0.0, 0.0});
    }
    ctx.goal = w.to_ego(w.route.end());

    Waypoints wp;
    bool ok = true;
    try {
      wp = policy(ctx);
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok || !finite_waypoints(wp)) {
      term = "bad_prediction";
      break;
    }

    Control u = track_waypoints(pid, wp, w.ego.v, cfg.sim.frame_rate_hz, dt);
    past.push_back(w.ego.pos);
    double t_cross = w.t;  // light state as of the crossing step
    step_world(w, cfg.sim, u, dt);

    double s_ego = 0.0, lat = 0.0;
    w.route.project(w.ego.pos, &s_ego, &lat);
    max_s = std::max(max_s, s_ego);

    for (std::size_t i = 0; i < w.agents.size(); ++i) {
      const Agent& a = w.agents[i];
      double d = point_obb_distance(w.ego.pos, a.pos, a.heading, a.length / 2.0, a.width / 2.0);
      if (d < kEgoRadius && w.t - last_hit[i] > kCollisionCooldownS) {
        res.events.push_back({"collision", w.t});
        res.infraction_product *= cfg.eval.penalty_collision;
        last_hit[i] = w.t;
      }
    }
    for (const auto& l : w.lights) {
      if (prev_s < l.route_s && s_ego >= l.route_s && l.is_red(t_cross)) {
        res.events.push_back({"red_light", w.t});
        res.infraction_product *= cfg.eval.penalty_red_light;
      }
    }
    for (const auto& sg : w.signs) {
      if (prev_s < sg.route_s && s_ego >= sg.route_s && !sg.satisfied) {
        res.events.push_back({"stop_sign", w.t});
        res.infraction_product *= cfg.eval.penalty_stop_sign;
      }
    }
    prev_s = s_ego;

    if (std::abs(lat) > cfg.eval.off_route_m) {
      res.events.push_back({"off_route", w.t});
      res.infraction_product *= cfg.eval.penalty_off_route;
      term = "off_route";
    }
    if (s_ego > last_prog_s + kProgressEps) {
      last_prog_s = s_ego;
      last_prog_t = w.t;
    } else if (w.t - last_prog_t > cfg.eval.blocked_timeout_s) {
      term = "blocked";
    }
    if (s_ego >= finish_s) term = "completed";
  }
  if (term.empty()) term = "timeout";

  res.termination = term;
  res.completion_pct =
      (term == "completed") ? 100.0 : std::min(100.0, 100.0 * max_s / route_len);
  res.driven_m = max_s;
  res.duration_s = w.t;
  return res;
}

EvalReport evaluate_policy(const RunConfig& cfg, const std::string& policy_name,
                           const PolicyFactory& factory) {
  int n = cfg.eval.routes * cfg.eval.seeds;
  Rng base = Rng(cfg.seed).derive("eval");
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = base.derive("ep" + std::to_string(i)).seed();

  std::vector<EpisodeResult> results(n);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      results[i] = run_episode(cfg, seeds[i], factory);
    }
  };
  int n_workers = std::max(1, std::min(cfg.jobs, n));
  std::vector<std::thread> pool;
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  EvalReport rep;
  rep.policy = policy_name;
  rep.episodes = std::move(results);
  rep.route_completion = route_completion(rep.episodes);
  rep.infraction_score = infraction_score(rep.episodes);
  rep.driving_score = driving_score(rep.episodes);
  return rep;
}

double route_completion(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.completion_pct;
  return s / episodes.size();
}

double infraction_score(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.infraction_product;
  return s / episodes.size();
}

double driving_score(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.completion_pct * e.infraction_product;
  return s / episodes.size();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : report.episodes) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : e.events) events.push_back({{"kind", ev.kind}, {"t", ev.t}});
    eps.push_back({{"world_seed", hex64(e.world_seed)},
                   {"completion_pct", e.completion_pct},
                   {"infraction_product", e.infraction_product},
                   {"termination", e.termination},
                   {"driven_m", e.driven_m},
                   {"duration_s", e.duration_s},
                   {"events", events}});
  }
  nlohmann::json j{{"policy", report.policy},
                   {"route_completion", report.route_completion},
                   {"infraction_score", report.infraction_score},
                   {"driving_score", report.driving_score},
                   {"episodes", eps}};
  return j.dump(2) + "\n";
}

}  // namespace hgd
