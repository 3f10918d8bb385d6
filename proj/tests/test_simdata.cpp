#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hgdrive/binio.hpp"
#include "hgdrive/config.hpp"
#include "hgdrive/evaluate.hpp"
#include "hgdrive/simdata.hpp"
#include "hgdrive/types.hpp"

using namespace hgd;

namespace {

World straight_world(double length_m) {
  World w;
  int n = static_cast<int>(length_m) + 1;
  for (int i = 0; i < n; ++i) {
    w.route.pts.push_back({static_cast<double>(i), 0.0});
    w.route.s.push_back(static_cast<double>(i));
  }
  w.ego.pos = {0.0, 0.0};
  w.ego.heading = 0.0;
  w.ego.v = 0.0;
  return w;
}

}  // namespace

TEST_CASE("route projection and sampling on a straight line") {
  World w = straight_world(40.0);
  CHECK(w.route.length() == doctest::Approx(40.0));
  Vec2 p = w.route.point_at(5.0);
  CHECK(p.x == doctest::Approx(5.0));
  CHECK(p.y == doctest::Approx(0.0));
  CHECK(w.route.heading_at(5.0) == doctest::Approx(0.0));

  double arc = 0.0, lat = 0.0;
  w.route.project({7.3, 2.0}, &arc, &lat);
  CHECK(arc == doctest::Approx(7.3));
  CHECK(lat == doctest::Approx(2.0));  // left of travel is positive
  w.route.project({7.3, -1.5}, &arc, &lat);
  CHECK(lat == doctest::Approx(-1.5));
}

TEST_CASE("ego frame transforms invert each other") {
  World w = straight_world(10.0);
  w.ego.pos = {3.0, -2.0};
  w.ego.heading = 0.7;
  Vec2 p{5.5, 1.25};
  Vec2 back = w.to_world(w.to_ego(p));
  CHECK(back.x == doctest::Approx(p.x).epsilon(1e-12));
  CHECK(back.y == doctest::Approx(p.y).epsilon(1e-12));
  // A point straight ahead of the ego maps onto the +x axis.
  Vec2 ahead = w.to_ego(w.ego.pos + rotate({4.0, 0.0}, w.ego.heading));
  CHECK(ahead.x == doctest::Approx(4.0));
  CHECK(ahead.y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("traffic light phase cycles red then green") {
  TrafficLight l;
  l.red_s = 2.0;
  l.green_s = 3.0;
  l.phase = 0.0;
  CHECK(l.is_red(0.0));
  CHECK(l.is_red(1.9));
  CHECK_FALSE(l.is_red(2.1));
  CHECK_FALSE(l.is_red(4.9));
  CHECK(l.is_red(5.1));  // next cycle
  l.phase = 2.0;
  CHECK_FALSE(l.is_red(0.0));
}

TEST_CASE("step_world integrates simple kinematics") {
  World w = straight_world(40.0);
  SimConfig sim;
  Control u;
  u.throttle = 1.0;
  step_world(w, sim, u, 0.5);
  CHECK(w.ego.v == doctest::Approx(sim.accel * 0.5));
  CHECK(w.ego.pos.x == doctest::Approx(w.ego.v * 0.5));
  CHECK(w.t == doctest::Approx(0.5));

  u.throttle = 0.0;
  u.brake = 1.0;
  for (int i = 0; i < 10; ++i) step_world(w, sim, u, 0.5);
  CHECK(w.ego.v == 0.0);

  // Negative steer turns left (heading grows), positive turns right.
  w.ego.v = 5.0;
  w.ego.heading = 0.0;
  u = Control{};
  u.steer = -0.5;
  u.throttle = 0.3;
  step_world(w, sim, u, 0.5);
  CHECK(w.ego.heading > 0.0);
  double h = w.ego.heading;
  u.steer = 0.5;
  step_world(w, sim, u, 0.5);
  CHECK(w.ego.heading < h);
}

TEST_CASE("a held stop releases the sign") {
  World w = straight_world(40.0);
  StopSign sg;
  sg.pos = {3.0, 0.0};
  sg.route_s = 3.0;
  w.signs.push_back(sg);
  SimConfig sim;

  CHECK(traffic_flags(w).stop == 1.0);
  Control coast;
  step_world(w, sim, coast, 0.6);
  CHECK_FALSE(w.signs[0].satisfied);  // held only 0.6 s
  step_world(w, sim, coast, 0.6);
  CHECK(w.signs[0].satisfied);
  CHECK(traffic_flags(w).stop == 0.0);

  // Rolling through at speed never satisfies it.
  World w2 = straight_world(40.0);
  w2.signs.push_back(sg);
  w2.ego.v = 5.0;
  Control cruise;
  cruise.throttle = 0.5;
  for (int i = 0; i < 4; ++i) step_world(w2, sim, cruise, 0.5);
  CHECK_FALSE(w2.signs[0].satisfied);
}

TEST_CASE("traffic flags fire inside their windows") {
  World w = straight_world(60.0);
  TrafficLight l;
  l.pos = {5.0, 0.0};
  l.route_s = 5.0;
  l.red_s = 1e6;  // effectively always red
  l.green_s = 1.0;
  w.lights.push_back(l);
  TrafficFlags f = traffic_flags(w);
  CHECK(f.light == 1.0);
  CHECK(f.junction == 1.0);
  // A light further out still reads as a hazard but not as a junction.
  w.lights[0].route_s = 15.0;
  w.lights[0].pos = {15.0, 0.0};
  f = traffic_flags(w);
  CHECK(f.light == 1.0);
  CHECK(f.junction == 0.0);
  // Far ahead both flags drop.
  w.lights[0].route_s = 30.0;
  w.lights[0].pos = {30.0, 0.0};
  f = traffic_flags(w);
  CHECK(f.light == 0.0);
  CHECK(f.junction == 0.0);
}

TEST_CASE("density targets bin an agent into the expected cell") {
  ModelConfig m = make_run_config("desk").model;  // 8x8 grid over 20 m
  World w = straight_world(40.0);
  Agent a;
  a.kind = Agent::Kind::parked;
  a.pos = {5.0, 0.0};
  a.heading = 0.0;
  a.speed = 0.0;
  w.agents.push_back(a);

  std::vector<double> d = density_targets(w, m);
  REQUIRE(static_cast<int>(d.size()) == 8 * 8 * 7);
  int r = 5, c = 3;
  std::size_t at = (static_cast<std::size_t>(r) * 8 + c) * 7;
  CHECK(d[at + 0] == 1.0);
  CHECK(d[at + 1] == doctest::Approx(-0.5));  // 5 m vs cell center 6.25 m
  CHECK(d[at + 2] == doctest::Approx(-0.5));  // 0 m vs cell center 1.25 m
  CHECK(d[at + 3] == doctest::Approx(0.0));
  CHECK(d[at + 5] == doctest::Approx(2.0 / 5.0));
  CHECK(d[at + 6] == doctest::Approx(4.5 / 5.0));
  int positives = 0;
  for (int i = 0; i < 64; ++i) positives += d[static_cast<std::size_t>(i) * 7] > 0.5 ? 1 : 0;
  CHECK(positives == 1);

  // Behind or beyond the span the map stays empty.
  w.agents[0].pos = {-4.0, 0.0};
  d = density_targets(w, m);
  for (int i = 0; i < 64; ++i) CHECK(d[static_cast<std::size_t>(i) * 7] == 0.0);
  w.agents[0].pos = {25.0, 0.0};
  d = density_targets(w, m);
  for (int i = 0; i < 64; ++i) CHECK(d[static_cast<std::size_t>(i) * 7] == 0.0);
}

TEST_CASE("gaze target is a peak normalized blob with the right mass") {
  ModelConfig m = make_run_config("desk").model;  // 32x64 image
  World w = straight_world(60.0);                 // no hazards: focus far on route
  double sigma_frac = 0.05;
  std::vector<double> g = gaze_targets(w, m, sigma_frac);
  REQUIRE(static_cast<int>(g.size()) == m.image_h * m.image_w);

  double maxv = 0.0, sum = 0.0;
  for (double v : g) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    maxv = std::max(maxv, v);
    sum += v;
  }
  CHECK(maxv == 1.0);
  // The blob integrates to ~2*pi*sigma^2; peak normalization on a sub-pixel
  // center can inflate it a few percent.
  double sigma = sigma_frac * m.image_w;
  CHECK(sum == doctest::Approx(2.0 * kPi * sigma * sigma).epsilon(0.05));

  // Focus sits straight ahead: mass concentrates on the center columns.
  double center_mass = 0.0;
  for (int r = 0; r < m.image_h; ++r)
    for (int c = m.image_w / 2 - 8; c < m.image_w / 2 + 8; ++c)
      center_mass += g[static_cast<std::size_t>(r) * m.image_w + c];
  CHECK(center_mass / sum > 0.95);
}

TEST_CASE("rendered sensors have contracted shapes and ranges") {
  ModelConfig m = make_run_config("toy").model;
  SimConfig sim;
  Rng rng(3);
  World w = make_world(sim, rng);
  Tensor img = render_image(w, m);
  CHECK(img.shape() == Shape{m.image_channels, m.image_h, m.image_w});
  Tensor bev = render_bev(w, m);
  CHECK(bev.shape() == Shape{m.bev_channels, m.bev_cells, m.bev_cells});
  for (double v : img.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : bev.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // The ego's own cell area carries route occupancy: the bev is never empty.
  double total = 0.0;
  for (double v : bev.data()) total += v;
  CHECK(total > 0.0);
}

TEST_CASE("world generation is seed deterministic") {
  SimConfig sim;
  Rng r1(1234), r2(1234);
  World a = make_world(sim, r1);
  World b = make_world(sim, r2);
  REQUIRE(a.route.pts.size() == b.route.pts.size());
  for (std::size_t i = 0; i < a.route.pts.size(); ++i) {
    CHECK(a.route.pts[i].x == b.route.pts[i].x);
    CHECK(a.route.pts[i].y == b.route.pts[i].y);
  }
  REQUIRE(a.agents.size() == b.agents.size());
  for (std::size_t i = 0; i < a.agents.size(); ++i) {
    CHECK(a.agents[i].pos.x == b.agents[i].pos.x);
    CHECK(static_cast<int>(a.agents[i].kind) == static_cast<int>(b.agents[i].kind));
  }
  CHECK(a.lights.size() == b.lights.size());
  CHECK(a.signs.size() == b.signs.size());
}

TEST_CASE("benchmark worlds can be emptied for control experiments") {
  RunConfig cfg = make_run_config("toy");
  cfg.eval.empty_world = true;
  Rng rng(7);
  World w = make_benchmark_world(cfg.sim, cfg.eval, rng);
  CHECK(w.agents.empty());
  CHECK(w.lights.empty());
  CHECK(w.signs.empty());
  TrafficFlags f = traffic_flags(w);
  CHECK(f.light == 0.0);
  CHECK(f.stop == 0.0);
  CHECK(f.junction == 0.0);
}

TEST_CASE("expert behavior near a red light") {
  SimConfig sim;
  World w = straight_world(80.0);
  w.ego.v = sim.cruise_speed;
  TrafficLight l;
  l.pos = {8.0, 0.0};
  l.route_s = 8.0;
  l.red_s = 1e6;
  l.green_s = 1.0;
  w.lights.push_back(l);

  ExpertDecision d = expert_drive(w, sim);
  CHECK(d.desired_v < sim.cruise_speed);
  CHECK(d.u.brake > 0.0);

  // On an open road the expert accelerates from rest toward cruise.
  World open = straight_world(80.0);
  ExpertDecision d2 = expert_drive(open, sim);
  CHECK(d2.desired_v == doctest::Approx(sim.cruise_speed));
  CHECK(d2.u.throttle > 0.0);

  Waypoints wp = expert_waypoints(open, sim, d2.desired_v);
  CHECK(wp[0].x > 0.0);
  CHECK(wp[1].x > wp[0].x);
  CHECK(wp[2].x > wp[1].x);
}

TEST_CASE("eeg emulation delays then flips") {
  std::vector<double> brake(20, 0.0);
  brake[10] = 1.0;

  Rng rng(5);
  std::vector<double> same = synthesize_eeg_labels(brake, 1.0, 0, rng);
  CHECK(same == brake);

  std::vector<double> shifted = synthesize_eeg_labels(brake, 1.0, 2, rng);
  REQUIRE(shifted.size() == brake.size());
  CHECK(shifted[12] == 1.0);
  CHECK(shifted[10] == 0.0);
  double total = 0.0;
  for (double v : shifted) total += v;
  CHECK(total == 1.0);

  // Boundary frames fill with zeros.
  std::vector<double> head(5, 1.0);
  std::vector<double> out = synthesize_eeg_labels(head, 1.0, 3, rng);
  CHECK(out == std::vector<double>{0.0, 0.0, 0.0, 1.0, 1.0});

  CHECK_THROWS_AS(synthesize_eeg_labels(brake, 0.5, 0, rng), ConfigError);
  CHECK_THROWS_AS(synthesize_eeg_labels(brake, 1.2, 0, rng), ConfigError);
  CHECK_THROWS_AS(synthesize_eeg_labels(brake, 0.65, -1, rng), ConfigError);
}

TEST_CASE("eeg flip rate matches one minus accuracy") {
  const int n = 10000;
  std::vector<double> brake(n);
  Rng lab(3);
  for (auto& v : brake) v = lab.bernoulli(0.3) ? 1.0 : 0.0;
  Rng rng(17);
  std::vector<double> out = synthesize_eeg_labels(brake, 0.65, 0, rng);
  int flips = 0;
  for (int i = 0; i < n; ++i) flips += out[i] != brake[i] ? 1 : 0;
  double rate = static_cast<double>(flips) / n;
  CHECK(rate == doctest::Approx(0.35).epsilon(0.02 / 0.35));
}

TEST_CASE("episodes are bitwise reproducible") {
  RunConfig cfg = make_run_config("toy");
  cfg.sim.episode_frames = 12;
  Episode a = generate_episode(cfg, 42, true);
  Episode b = generate_episode(cfg, 42, true);
  CHECK(encode_episode(a, cfg.model) == encode_episode(b, cfg.model));
  Episode c = generate_episode(cfg, 43, true);
  CHECK(encode_episode(a, cfg.model) != encode_episode(c, cfg.model));
}

TEST_CASE("split labels match their source") {
  RunConfig cfg = make_run_config("toy");
  cfg.sim.episode_frames = 10;
  Episode machine = generate_episode(cfg, 9, false);
  REQUIRE(!machine.frames.empty());
  for (const auto& f : machine.frames) {
    CHECK_FALSE(f.targets.has_gaze);
    CHECK_FALSE(f.targets.has_intention);
    CHECK(f.targets.gaze.empty());
  }
  Episode human = generate_episode(cfg, 9, true);
  REQUIRE(!human.frames.empty());
  for (const auto& f : human.frames) {
    CHECK(f.targets.has_gaze);
    CHECK(f.targets.has_intention);
    CHECK(static_cast<int>(f.targets.gaze.size()) == cfg.model.image_h * cfg.model.image_w);
    CHECK((f.targets.eeg == 0.0 || f.targets.eeg == 1.0));
    CHECK((f.targets.brake == 0.0 || f.targets.brake == 1.0));
  }
  // Same seed, same world: the sensor streams agree across splits.
  CHECK(machine.frames.size() == human.frames.size());
  CHECK(machine.frames[0].image == human.frames[0].image);
}

TEST_CASE("frame records carry consistent shapes") {
  RunConfig cfg = make_run_config("toy");
  cfg.sim.episode_frames = 10;
  Episode ep = generate_episode(cfg, 5, true);
  const ModelConfig& m = cfg.model;
  for (const auto& f : ep.frames) {
    CHECK(static_cast<int>(f.image.size()) == m.image_channels * m.image_h * m.image_w);
    CHECK(static_cast<int>(f.bev.size()) == m.bev_channels * m.bev_cells * m.bev_cells);
    CHECK(static_cast<int>(f.history.size()) == m.history_len);
    CHECK(static_cast<int>(f.targets.waypoints.size()) == 6);
    CHECK(static_cast<int>(f.targets.density.size()) == m.density_cells * m.density_cells * 7);
    for (double v : f.targets.waypoints) CHECK(std::isfinite(v));
    CHECK(f.speed >= 0.0);
  }
}

TEST_CASE("episode encoding round trips and detects corruption") {
  RunConfig cfg = make_run_config("toy");
  cfg.sim.episode_frames = 8;
  Episode ep = generate_episode(cfg, 77, true);
  std::vector<std::uint8_t> bytes = encode_episode(ep, cfg.model);
  Episode back = decode_episode(bytes, cfg.model);
  CHECK(encode_episode(back, cfg.model) == bytes);
  CHECK(back.seed == ep.seed);
  CHECK(back.frames.size() == ep.frames.size());

  std::vector<std::uint8_t> bad = bytes;
  bad[bytes.size() / 3] ^= 0x40;
  CHECK_THROWS_AS(decode_episode(bad, cfg.model), IoError);
  std::vector<std::uint8_t> trunc(bytes.begin(), bytes.begin() + bytes.size() / 2);
  CHECK_THROWS_AS(decode_episode(trunc, cfg.model), IoError);
}

TEST_CASE("split generation is independent of worker count") {
  RunConfig cfg = make_run_config("toy");
  cfg.sim.machine_frames = 60;
  cfg.sim.episode_frames = 10;
  std::vector<Episode> lone = generate_split(cfg, "machine", 1);
  std::vector<Episode> pool = generate_split(cfg, "machine", 4);
  REQUIRE(lone.size() == pool.size());
  for (std::size_t i = 0; i < lone.size(); ++i)
    CHECK(encode_episode(lone[i], cfg.model) == encode_episode(pool[i], cfg.model));
}

TEST_CASE("episode seeds derive from config seed and split only") {
  RunConfig cfg = make_run_config("toy");
  std::vector<std::uint64_t> m1 = dataset_episode_seeds(cfg, "machine");
  std::vector<std::uint64_t> m2 = dataset_episode_seeds(cfg, "machine");
  CHECK(m1 == m2);
  std::vector<std::uint64_t> h = dataset_episode_seeds(cfg, "human");
  CHECK(m1 != h);
  cfg.seed = 1;
  CHECK(dataset_episode_seeds(cfg, "machine") != m1);
}

TEST_CASE("datasets write, verify, and reload from disk") {
  RunConfig cfg = make_run_config("toy");
  cfg.sim.human_frames = 30;
  cfg.sim.episode_frames = 10;
  std::string dir = (std::filesystem::temp_directory_path() / "hgd_test_ds").string();
  std::filesystem::remove_all(dir);

  DatasetInfo info = generate_dataset(cfg, "human", dir, 2);
  CHECK(info.split == "human");
  CHECK(info.seed == cfg.seed);
  CHECK(info.config_hash == hex64(data_config_hash(cfg)));
  CHECK(info.episodes == static_cast<int>(info.files.size()));
  CHECK(info.frames >= cfg.sim.human_frames);

  DatasetInfo read = read_manifest(dir);
  CHECK(read.split == info.split);
  CHECK(read.config_hash == info.config_hash);
  CHECK(read.files == info.files);

  std::vector<Episode> from_disk = load_episodes(read, cfg.model);
  std::vector<Episode> direct = generate_split(cfg, "human", 1);
  REQUIRE(from_disk.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i)
    CHECK(encode_episode(from_disk[i], cfg.model) == encode_episode(direct[i], cfg.model));

  std::filesystem::remove_all(dir);
}

TEST_CASE("expert never runs a red light across one hundred episodes") {
  RunConfig cfg = make_run_config("toy");
  cfg.eval.routes = 25;
  cfg.eval.seeds = 4;
  EvalReport rep = evaluate_policy(cfg, "expert", expert_policy_factory(cfg.sim));
  REQUIRE(rep.episodes.size() == 100);
  int red = 0, collisions = 0;
  for (const auto& ep : rep.episodes) {
    for (const auto& e : ep.events) {
      if (e.kind == "red_light") ++red;
      if (e.kind == "collision") ++collisions;
    }
  }
  CHECK(red == 0);
  CHECK(collisions == 0);
  CHECK(rep.route_completion > 80.0);
}
