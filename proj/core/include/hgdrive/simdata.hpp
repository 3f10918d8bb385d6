#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/heads.hpp"
#include "hgdrive/rng.hpp"
#include "hgdrive/tensor.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

// ------------------------------------------------------------------- world

// Polyline resampled to ~1 m spacing with cumulative arclength.
struct Route {
  std::vector<Vec2> pts;
  std::vector<double> s;

  double length() const { return s.empty() ? 0.0 : s.back(); }
  Vec2 point_at(double arc) const;
  double heading_at(double arc) const;
  // Nearest point on the polyline: arclength and signed lateral offset
  // (positive = left of travel direction).
  void project(const Vec2& p, double* arc_out, double* lat_out) const;
  Vec2 end() const { return pts.back(); }
};

struct Agent {
  enum class Kind { parked, lead, crossing };
  Kind kind = Kind::parked;
  Vec2 pos;
  double heading = 0.0;
  double speed = 0.0;
  double width = 2.0;
  double length = 4.5;
  double route_s = 0.0;   // lead: current arclength along the route
  Vec2 cross_anchor;      // crossing: center of the ping-pong segment
  Vec2 cross_dir;         // crossing: unit direction of travel
  double cross_span = 0.0;
};

struct TrafficLight {
  Vec2 pos;
  double route_s = 0.0;
  double red_s = 6.0;
  double green_s = 8.0;
  double phase = 0.0;
  bool is_red(double t) const;
};

struct StopSign {
  Vec2 pos;
  double route_s = 0.0;
  bool satisfied = false;  // ego has held a stop in the approach zone
  double hold_s = 0.0;
};

struct EgoState {
  Vec2 pos;
  double heading = 0.0;
  double v = 0.0;
};

struct World {
  Route route;
  std::vector<Agent> agents;
  std::vector<TrafficLight> lights;
  std::vector<StopSign> signs;
  EgoState ego;
  double t = 0.0;

  Vec2 to_ego(const Vec2& world_pt) const;
  Vec2 to_world(const Vec2& ego_pt) const;
};

World make_world(const SimConfig& sim, Rng& rng);
World make_benchmark_world(const SimConfig& sim, const EvalConfig& eval, Rng& rng);

struct Control {
  double steer = 0.0;     // [-1,1], negative turns left
  double throttle = 0.0;  // [0,1]
  double brake = 0.0;     // [0,1]
};

// Advances ego kinematics, scripted agents, stop-sign satisfaction (a held
// stop in the approach zone releases the sign), and time by dt.
void step_world(World& w, const SimConfig& sim, const Control& u, double dt);

// ------------------------------------------------------------------ expert

// Scripted driver: pure-pursuit steering toward a speed-scaled lookahead,
// with deceleration rules for red lights, unsatisfied stop signs, and agents
// blocking the corridor ahead.
struct ExpertDecision {
  Control u;
  double desired_v = 0.0;
  bool braking = false;
};
ExpertDecision expert_drive(const World& w, const SimConfig& sim);

// The expert's intent expressed as future positions, for running it through
// the same waypoint-tracking controller as learned policies.
Waypoints expert_waypoints(const World& w, const SimConfig& sim, double desired_v);

// ----------------------------------------------------------------- sensors

// Range-view camera raster (C,H,W): inverse depth, class code, route mask.
Tensor render_image(const World& w, const ModelConfig& m);
// Top-down raster (Cb,G,G): occupancy, speed, route mask, stop mask. Any
// channels past the first four are zero.
Tensor render_bev(const World& w, const ModelConfig& m);

struct TrafficFlags {
  double light = 0.0;
  double stop = 0.0;
  double junction = 0.0;
};
TrafficFlags traffic_flags(const World& w);

std::vector<double> density_targets(const World& w, const ModelConfig& m);
// Peak-normalized Gaussian blob at the most relevant image point (nearest
// hazard, else the far route point).
std::vector<double> gaze_targets(const World& w, const ModelConfig& m, double sigma_frac);

// ----------------------------------------------------------------- dataset

struct FrameRecord {
  std::vector<double> image;  // C*H*W
  std::vector<double> bev;    // Cb*G*G
  std::vector<Vec2> history;  // history_len, ego frame, oldest first
  Vec2 goal;                  // ego frame, unclamped
  double speed = 0.0;
  HeadTargets targets;
};

struct Episode {
  std::uint64_t seed = 0;
  std::vector<FrameRecord> frames;
};

// Emulated anticipatory intention labels: brake ground truth delayed by
// shift_frames (boundary frames zero-filled), each label then independently
// flipped with probability 1 - accuracy.
std::vector<double> synthesize_eeg_labels(const std::vector<double>& brake_labels,
                                          double accuracy, int shift_frames, Rng& rng);

// Rolls the expert through a generated world and assembles one frame per
// step (minus the horizon tail, which lacks future-position labels). The
// human split carries gaze and intention labels; intention combines the
// expert's braking with an emulated noisy anticipatory signal.
Episode generate_episode(const RunConfig& cfg, std::uint64_t seed, bool human_split);

// The per-episode seeds a split is built from (a function of cfg.seed and
// the split name only).
std::vector<std::uint64_t> dataset_episode_seeds(const RunConfig& cfg, const std::string& split);

// Same episodes generate_dataset would write, without touching disk.
std::vector<Episode> generate_split(const RunConfig& cfg, const std::string& split, int jobs);

std::vector<std::uint8_t> encode_episode(const Episode& ep, const ModelConfig& m);
Episode decode_episode(const std::vector<std::uint8_t>& bytes, const ModelConfig& m);

struct DatasetInfo {
  std::string dir;
  std::string split;  // "machine" | "human"
  std::uint64_t seed = 0;
  std::string config_hash;
  int episodes = 0;
  int frames = 0;
  std::vector<std::string> files;  // episode file names, in order
};

// Writes episode files plus manifest.json into out_dir. Episodes are seeded
// independently of worker count, so the output is byte-identical for any
// `jobs`. Returns the manifest.
DatasetInfo generate_dataset(const RunConfig& cfg, const std::string& split,
                             const std::string& out_dir, int jobs);

DatasetInfo read_manifest(const std::string& dir);
std::vector<Episode> load_episodes(const DatasetInfo& info, const ModelConfig& m);

}  // namespace hgd
