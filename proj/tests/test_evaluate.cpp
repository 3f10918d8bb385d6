#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "hgdrive/evaluate.hpp"
#include "hgdrive/rng.hpp"
#include "json.hpp"

using namespace hgd;

namespace {

EpisodeResult ep(double completion, double product) {
  EpisodeResult r;
  r.completion_pct = completion;
  r.infraction_product = product;
  return r;
}

RunConfig toy_eval_config(int routes, int seeds, bool empty_world) {
  RunConfig cfg = make_run_config("toy");
  cfg.seed = 17;
  cfg.eval.routes = routes;
  cfg.eval.seeds = seeds;
  cfg.eval.empty_world = empty_world;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("aggregate metrics on a two episode log") {
  std::vector<EpisodeResult> log{ep(100.0, 1.0), ep(80.0, 0.5)};
  CHECK(route_completion(log) == 90.0);
  CHECK(infraction_score(log) == 0.75);
  CHECK(driving_score(log) == 70.0);
}

TEST_CASE("aggregates of an empty log are zero") {
  std::vector<EpisodeResult> log;
  CHECK(route_completion(log) == 0.0);
  CHECK(infraction_score(log) == 0.0);
  CHECK(driving_score(log) == 0.0);
}

TEST_CASE("clean logs score driving equal to completion") {
  Rng rng(5);
  std::vector<EpisodeResult> log;
  for (int i = 0; i < 20; ++i) log.push_back(ep(100.0 * rng.uniform(), 1.0));
  CHECK(infraction_score(log) == 1.0);
  CHECK(driving_score(log) == doctest::Approx(route_completion(log)).epsilon(1e-12));
}

TEST_CASE("adding an infraction never improves any aggregate") {
  Rng rng(99);
  const double penalties[4] = {0.5, 0.7, 0.8, 0.7};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EpisodeResult> log;
    int n = 2 + static_cast<int>(rng.uniform_int(0, 5));
    for (int i = 0; i < n; ++i) {
      double product = 1.0;
      int hits = static_cast<int>(rng.uniform_int(0, 3));
      for (int k = 0; k < hits; ++k) product *= penalties[rng.uniform_int(0, 3)];
      log.push_back(ep(100.0 * rng.uniform(), product));
    }
    double rc = route_completion(log);
    double is = infraction_score(log);
    double ds = driving_score(log);

    std::size_t victim = rng.uniform_int(0, static_cast<std::int64_t>(log.size()) - 1);
    log[victim].infraction_product *= penalties[rng.uniform_int(0, 3)];

    CHECK(route_completion(log) == rc);
    CHECK(infraction_score(log) < is);
    CHECK(driving_score(log) <= ds);
  }
}

TEST_CASE("expert completes empty benchmark worlds with a perfect score") {
  RunConfig cfg = toy_eval_config(3, 1, true);
  EvalReport rep = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  CHECK(rep.policy == "expert");
  REQUIRE(rep.episodes.size() == 3);
  for (const auto& e : rep.episodes) {
    CHECK(e.termination == "completed");
    CHECK(e.completion_pct == 100.0);
    CHECK(e.infraction_product == 1.0);
    CHECK(e.events.empty());
    CHECK(e.driven_m > 0.0);
    CHECK(e.duration_s > 0.0);
  }
  CHECK(rep.route_completion == 100.0);
  CHECK(rep.infraction_score == 1.0);
  CHECK(rep.driving_score == 100.0);
}

TEST_CASE("a policy that stops dead is reported blocked") {
  RunConfig cfg = toy_eval_config(1, 1, true);
  PolicyFactory stopper = [](std::uint64_t) {
    return [](const StepContext&) { return Waypoints{{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}}; };
  };
  EpisodeResult r = run_episode(cfg, 123, stopper);
  CHECK(r.termination == "blocked");
  CHECK(r.completion_pct < 5.0);
  CHECK(r.duration_s > cfg.eval.blocked_timeout_s);
  CHECK(r.duration_s < cfg.eval.max_duration_s);
}

TEST_CASE("a throwing policy terminates as bad prediction") {
  RunConfig cfg = toy_eval_config(1, 1, true);
  PolicyFactory thrower = [](std::uint64_t) {
    return [](const StepContext&) -> Waypoints { throw std::runtime_error("boom"); };
  };
  EpisodeResult r = run_episode(cfg, 123, thrower);
  CHECK(r.termination == "bad_prediction");
  CHECK(r.completion_pct == 0.0);
  CHECK(r.events.empty());
}

TEST_CASE("non finite waypoints terminate as bad prediction") {
  RunConfig cfg = toy_eval_config(1, 1, true);
  double nan = std::numeric_limits<double>::quiet_NaN();
  PolicyFactory broken = [nan](std::uint64_t) {
    return [nan](const StepContext&) { return Waypoints{{{nan, 0.0}, {1.0, 0.0}, {2.0, 0.0}}}; };
  };
  EpisodeResult r = run_episode(cfg, 123, broken);
  CHECK(r.termination == "bad_prediction");
}

TEST_CASE("recorded events always explain the penalty product") {
  RunConfig cfg = toy_eval_config(4, 2, false);
  std::map<std::string, double> penalty{
      {"collision", cfg.eval.penalty_collision},
      {"red_light", cfg.eval.penalty_red_light},
      {"stop_sign", cfg.eval.penalty_stop_sign},
      {"off_route", cfg.eval.penalty_off_route},
  };
  // A policy that charges straight ahead at speed: it ignores lights, curves,
  // and traffic, so it racks up a mix of infractions and terminations.
  PolicyFactory speeder = [](std::uint64_t) {
    return [](const StepContext&) { return Waypoints{{{8.0, 0.0}, {16.0, 0.0}, {24.0, 0.0}}}; };
  };
  for (const PolicyFactory& factory : {speeder, expert_policy_factory(cfg.sim)}) {
    EvalReport rep = evaluate_policy(cfg, "probe", factory);
    REQUIRE(rep.episodes.size() == 8);
    for (const auto& e : rep.episodes) {
      double product = 1.0;
      for (const auto& ev : e.events) {
        REQUIRE(penalty.count(ev.kind) == 1);
        CHECK(ev.t >= 0.0);
        CHECK(ev.t <= e.duration_s);
        product *= penalty.at(ev.kind);
      }
      CHECK(e.infraction_product == doctest::Approx(product).epsilon(1e-12));
      if (e.termination == "off_route") {
        REQUIRE(!e.events.empty());
        CHECK(e.events.back().kind == "off_route");
      }
    }
  }
}

TEST_CASE("two infractions multiply their penalties") {
  std::vector<EpisodeResult> log{ep(100.0, 0.5 * 0.7)};
  CHECK(infraction_score(log) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(driving_score(log) == doctest::Approx(35.0).epsilon(1e-12));
}

TEST_CASE("evaluation is deterministic and thread count invariant") {
  RunConfig cfg = toy_eval_config(3, 1, false);
  cfg.jobs = 1;
  EvalReport a = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  EvalReport b = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  cfg.jobs = 3;
  EvalReport c = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(report_to_json(a) == report_to_json(c));
}

TEST_CASE("episode worlds depend on the run seed") {
  RunConfig cfg = toy_eval_config(2, 1, false);
  EvalReport a = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  cfg.seed = 18;
  EvalReport b = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  REQUIRE(a.episodes.size() == b.episodes.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.episodes.size(); ++i)
    any_diff = any_diff || a.episodes[i].world_seed != b.episodes[i].world_seed;
  CHECK(any_diff);
}

TEST_CASE("random policy runs to completion of the harness") {
  RunConfig cfg = toy_eval_config(2, 1, true);
  EvalReport rep = evaluate_policy(cfg, "random", random_policy_factory());
  REQUIRE(rep.episodes.size() == 2);
  for (const auto& e : rep.episodes) {
    CHECK(!e.termination.empty());
    CHECK(e.completion_pct >= 0.0);
    CHECK(e.completion_pct <= 100.0);
  }
  CHECK(rep.driving_score <= rep.route_completion + 1e-12);
}

TEST_CASE("report json carries the full episode log") {
  RunConfig cfg = toy_eval_config(2, 1, true);
  EvalReport rep = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  nlohmann::json j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j.at("policy") == "expert");
  CHECK(j.at("route_completion").get<double>() == doctest::Approx(rep.route_completion));
  CHECK(j.at("infraction_score").get<double>() == doctest::Approx(rep.infraction_score));
  CHECK(j.at("driving_score").get<double>() == doctest::Approx(rep.driving_score));
  REQUIRE(j.at("episodes").size() == 2);
  const auto& e0 = j.at("episodes").at(0);
  CHECK(e0.contains("world_seed"));
  CHECK(e0.contains("completion_pct"));
  CHECK(e0.contains("infraction_product"));
  CHECK(e0.contains("termination"));
  CHECK(e0.contains("events"));
}
