#include <algorithm>
#include <cmath>

#include "hgdrive/geometry.hpp"
#include "hgdrive/simdata.hpp"

namespace hgd {
namespace {

// Heading change per meter at full steer; steering -1 turns left.
constexpr double kYawGain = 0.2;
constexpr double kCamHeight = 1.6;
constexpr double kRouteHalfWidth = 1.5;
constexpr double kMaxRenderDepth = 60.0;

constexpr double kAgentHeight = 1.5;
constexpr double kLightHeight = 3.0;
constexpr double kSignHeight = 1.2;

Vec2 heading_dir(double h) { return {std::cos(h), std::sin(h)}; }

// Distance along a ray (origin, unit dir) to a rectangle centered at c with
// the given heading and half extents; negative when there is no hit.
double ray_obb(const Vec2& origin, const Vec2& dir, const Vec2& c, double heading, double half_l,
               double half_w) {
  Vec2 o = rotate(origin - c, -heading);
  Vec2 d = rotate(dir, -heading);
  double t0 = 0.0, t1 = 1e18;
  const double mins[2] = {-half_l, -half_w};
  const double maxs[2] = {half_l, half_w};
  const double od[2] = {o.x, o.y};
  const double dd[2] = {d.x, d.y};
  for (int a = 0; a < 2; ++a) {
    if (std::abs(dd[a]) < 1e-12) {
      if (od[a] < mins[a] || od[a] > maxs[a]) return -1.0;
      continue;
    }
    double ta = (mins[a] - od[a]) / dd[a];
    double tb = (maxs[a] - od[a]) / dd[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0;
}

double ray_circle(const Vec2& origin, const Vec2& dir, const Vec2& c, double radius) {
  Vec2 oc = origin - c;
  double b = dot(oc, dir);
  double disc = b * b - (dot(oc, oc) - radius * radius);
  if (disc < 0.0) return -1.0;
  double t = -b - std::sqrt(disc);
  return (t > 0.0) ? t : -1.0;
}

double taper(double dist, double stop_at, double run) {
  return clamp((dist - stop_at) / run, 0.0, 1.0);
}

}  // namespace

// ------------------------------------------------------------------- route

Vec2 Route::point_at(double arc) const {
  arc = clamp(arc, 0.0, length());
  auto it = std::upper_bound(s.begin(), s.end(), arc);
  std::size_t i = (it == s.begin()) ? 0 : (it - s.begin() - 1);
  if (i + 1 >= pts.size()) return pts.back();
  double seg = s[i + 1] - s[i];
  double t = (seg > 1e-12) ? (arc - s[i]) / seg : 0.0;
  return pts[i] + (pts[i + 1] - pts[i]) * t;
}

double Route::heading_at(double arc) const {
  arc = clamp(arc, 0.0, length());
  auto it = std::upper_bound(s.begin(), s.end(), arc);
  std::size_t i = (it == s.begin()) ? 0 : (it - s.begin() - 1);
  if (i + 1 >= pts.size()) i = pts.size() - 2;
  Vec2 d = pts[i + 1] - pts[i];
  return std::atan2(d.y, d.x);
}

void Route::project(const Vec2& p, double* arc_out, double* lat_out) const {
  double best_d2 = 1e18, best_arc = 0.0, best_lat = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    Vec2 a = pts[i], d = pts[i + 1] - a;
    double len2 = dot(d, d);
    double t = (len2 > 1e-12) ? clamp(dot(p - a, d) / len2, 0.0, 1.0) : 0.0;
    Vec2 q = a + d * t;
    double d2 = dot(p - q, p - q);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_arc = s[i] + std::sqrt(len2) * t;
      double seg_len = std::sqrt(len2);
      // positive lateral offset = left of the direction of travel
      best_lat = (seg_len > 1e-12) ? (d.x * (p.y - a.y) - d.y * (p.x - a.x)) / seg_len : 0.0;
    }
  }
  if (arc_out) *arc_out = best_arc;
  if (lat_out) *lat_out = best_lat;
}

bool TrafficLight::is_red(double t) const {
  double cycle = red_s + green_s;
  double ph = std::fmod(t + phase, cycle);
  if (ph < 0.0) ph += cycle;
  return ph < red_s;
}

Vec2 World::to_ego(const Vec2& world_pt) const {
  return rotate(world_pt - ego.pos, -ego.heading);
}

Vec2 World::to_world(const Vec2& ego_pt) const { return ego.pos + rotate(ego_pt, ego.heading); }

// --------------------------------------------------------------- generation

World make_world(const SimConfig& sim, Rng& rng) {
  World w;
  double target = rng.uniform(sim.route_min_m, sim.route_max_m);
  Vec2 p{rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)};
  double h = rng.uniform(-kPi, kPi);
  w.route.pts.push_back(p);
  w.route.s.push_back(0.0);
  double arc = 0.0;
  while (arc < target) {
    double seg_len = rng.uniform(10.0, 25.0);
    double turn = deg2rad(rng.uniform(-sim.route_turn_max_deg, sim.route_turn_max_deg));
    int steps = static_cast<int>(std::ceil(seg_len));
    double step = seg_len / steps;
    for (int i = 0; i < steps && arc < target + 1.0; ++i) {
      h = wrap_angle(h + turn / steps);
      p = p + heading_dir(h) * step;
      arc += step;
      w.route.pts.push_back(p);
      w.route.s.push_back(arc);
    }
  }

  w.ego.pos = w.route.pts.front();
  w.ego.heading = w.route.heading_at(0.0);
  w.ego.v = 0.0;

  double len = w.route.length();
  int n_agents = rng.uniform_int(sim.agents_min, sim.agents_max);
  for (int i = 0; i < n_agents; ++i) {
    Agent a;
    int kind = rng.uniform_int(0, 2);
    if (kind == 0) {
      a.kind = Agent::Kind::parked;
      double s0 = rng.uniform(15.0, std::max(16.0, len - 10.0));
      double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      double lat = side * rng.uniform(2.6, 4.0);
      double rh = w.route.heading_at(s0);
      a.pos = w.route.point_at(s0) + rotate({0.0, lat}, rh);
      a.heading = rh;
      a.speed = 0.0;
      a.route_s = s0;
    } else if (kind == 1) {
      a.kind = Agent::Kind::lead;
      a.route_s = rng.uniform(15.0, 35.0);
      a.speed = sim.cruise_speed * rng.uniform(0.35, 0.7);
      a.pos = w.route.point_at(a.route_s);
      a.heading = w.route.heading_at(a.route_s);
    } else {
      a.kind = Agent::Kind::crossing;
      a.route_s = rng.uniform(20.0, std::max(21.0, len - 20.0));
      a.cross_anchor = w.route.point_at(a.route_s);
      double rh = w.route.heading_at(a.route_s);
      double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      a.cross_dir = rotate({0.0, side}, rh);
      a.cross_span = 12.0;
      a.pos = a.cross_anchor - a.cross_dir * a.cross_span;
      a.heading = std::atan2(a.cross_dir.y, a.cross_dir.x);
      a.speed = rng.uniform(0.8, 2.0);
      a.width = 1.0;
      a.length = 1.0;
    }
    w.agents.push_back(a);
  }

  int n_lights = rng.uniform_int(0, sim.lights_max);
  for (int i = 0; i < n_lights; ++i) {
    TrafficLight l;
    l.route_s = rng.uniform(25.0, std::max(26.0, len - 15.0));
    l.pos = w.route.point_at(l.route_s);
    l.red_s = rng.uniform(4.0, 8.0);
    l.green_s = rng.uniform(6.0, 10.0);
    l.phase = rng.uniform(0.0, l.red_s + l.green_s);
    w.lights.push_back(l);
  }

  int n_signs = rng.uniform_int(0, sim.signs_max);
  for (int i = 0; i < n_signs; ++i) {
    StopSign sg;
    bool placed = false;
    for (int tries = 0; tries < 8 && !placed; ++tries) {
      sg.route_s = rng.uniform(25.0, std::max(26.0, len - 15.0));
      placed = true;
      for (const auto& l : w.lights)
        if (std::abs(l.route_s - sg.route_s) < 15.0) placed = false;
    }
    if (!placed) continue;
    sg.pos = w.route.point_at(sg.route_s);
    w.signs.push_back(sg);
  }
  return w;
}

World make_benchmark_world(const SimConfig& sim, const EvalConfig& eval, Rng& rng) {
  World w = make_world(sim, rng);
  if (eval.empty_world) {
    w.agents.clear();
    w.lights.clear();
    w.signs.clear();
  }
  return w;
}

// ----------------------------------------------------------------- dynamics

void step_world(World& w, const SimConfig& sim, const Control& u, double dt) {
  double throttle = clamp(u.throttle, 0.0, 1.0);
  double brake = clamp(u.brake, 0.0, 1.0);
  double steer = clamp(u.steer, -1.0, 1.0);
  w.ego.v = clamp(w.ego.v + (throttle * sim.accel - brake * sim.decel) * dt, 0.0, sim.v_max);
  w.ego.heading = wrap_angle(w.ego.heading - steer * kYawGain * w.ego.v * dt);
  w.ego.pos = w.ego.pos + heading_dir(w.ego.heading) * (w.ego.v * dt);

  for (auto& a : w.agents) {
    if (a.kind == Agent::Kind::lead) {
      a.route_s = std::min(a.route_s + a.speed * dt, w.route.length());
      a.pos = w.route.point_at(a.route_s);
      a.heading = w.route.heading_at(a.route_s);
    } else if (a.kind == Agent::Kind::crossing) {
      a.pos = a.pos + a.cross_dir * (a.speed * dt);
      double along = dot(a.pos - a.cross_anchor, a.cross_dir);
      if (std::abs(along) > a.cross_span) {
        a.cross_dir = a.cross_dir * -1.0;
        a.heading = std::atan2(a.cross_dir.y, a.cross_dir.x);
      }
    }
  }

  if (!w.signs.empty()) {
    double s_ego = 0.0;
    w.route.project(w.ego.pos, &s_ego, nullptr);
    for (auto& sg : w.signs) {
      if (sg.satisfied) continue;
      double dist = sg.route_s - s_ego;
      if (dist > -1.0 && dist < 6.0 && w.ego.v < 0.3) {
        sg.hold_s += dt;
        if (sg.hold_s >= 1.0) sg.satisfied = true;
      }
    }
  }
  w.t += dt;
}

// ------------------------------------------------------------------- expert

ExpertDecision expert_drive(const World& w, const SimConfig& sim) {
  double s_ego = 0.0;
  w.route.project(w.ego.pos, &s_ego, nullptr);

  double lookahead = clamp(1.2 * w.ego.v, 4.0, 10.0);
  Vec2 target = w.to_ego(w.route.point_at(s_ego + lookahead));
  double alpha = std::atan2(target.y, target.x);
  double kappa = 2.0 * std::sin(alpha) / lookahead;

  ExpertDecision d;
  d.u.steer = clamp(-kappa / kYawGain, -1.0, 1.0);

  double desired = sim.cruise_speed;
  for (const auto& l : w.lights) {
    double dist = l.route_s - s_ego;
    if (dist > -1.0 && dist < 15.0) {
      // Hold for a light that is red now or will be red around arrival, so
      // a phase flip just before the line never catches the expert inside.
      double eta = std::min(dist / std::max(w.ego.v, 1.0), 6.0);
      bool red_soon =
          l.is_red(w.t) || l.is_red(w.t + 0.5 * eta) || l.is_red(w.t + eta);
      if (red_soon) desired = std::min(desired, sim.cruise_speed * taper(dist, 3.0, 10.0));
    }
  }
  for (const auto& sg : w.signs) {
    double dist = sg.route_s - s_ego;
    if (!sg.satisfied && dist > -1.0 && dist < 12.0)
      desired = std::min(desired, sim.cruise_speed * taper(dist, 2.0, 8.0));
  }
  for (const auto& a : w.agents) {
    Vec2 q = w.to_ego(a.pos);
    // Crossing walkers get a wider corridor scaled by how fast they close
    // on the ego lane, so the expert brakes before they step into it.
    double reach = 2.2;
    if (a.kind == Agent::Kind::crossing) {
      Vec2 vel = rotate(a.cross_dir * a.speed, -w.ego.heading);
      double closing = q.y > 0.0 ? -vel.y : vel.y;
      if (closing > 0.0) reach += closing * 2.5;
    }
    if (q.x > 0.5 && q.x < 14.0 && std::abs(q.y) < reach)
      desired = std::min(desired, sim.cruise_speed * taper(q.x, 4.0, 8.0));
  }

  d.desired_v = desired;
  if (w.ego.v < desired - 0.15) {
    d.u.throttle = clamp((desired - w.ego.v) * 0.5, 0.0, 1.0);
  } else if (w.ego.v > desired + 0.15) {
    d.u.brake = clamp((w.ego.v - desired) * 0.6, 0.0, 1.0);
  }
  if (desired < 0.05 && w.ego.v > 0.0) d.u.brake = std::max(d.u.brake, 0.4);
  d.braking = d.u.brake > 0.05;
  return d;
}

Waypoints expert_waypoints(const World& w, const SimConfig& sim, double desired_v) {
  double s_ego = 0.0;
  w.route.project(w.ego.pos, &s_ego, nullptr);
  double dt = 1.0 / sim.frame_rate_hz;
  Waypoints wp;
  for (int k = 0; k < 3; ++k)
    wp[k] = w.to_ego(w.route.point_at(s_ego + desired_v * dt * (k + 1)));
  return wp;
}

// ------------------------------------------------------------------ sensors

Tensor render_image(const World& w, const ModelConfig& m) {
  if (m.image_channels < 3)
    throw ConfigError("render_image: needs at least 3 image channels");
  int C = m.image_channels, H = m.image_h, W = m.image_w;
  CameraModel cam = make_camera(W, H, m.camera_fov_deg);
  std::vector<double> img(static_cast<std::size_t>(C) * H * W, 0.0);
  auto px = [&](int ch, int r, int c) -> double& {
    return img[(static_cast<std::size_t>(ch) * H + r) * W + c];
  };

  double f = cam.focal();
  for (int c = 0; c < W; ++c) {
    double b = std::atan((W / 2.0 - (c + 0.5)) / f);
    Vec2 dir = heading_dir(b);

    // nearest object hit along this column's ray (ego frame)
    double hit_d = -1.0, hit_h = 0.0, hit_cls = 0.0;
    auto consider = [&](double d, double height, double cls) {
      if (d > 0.3 && d < kMaxRenderDepth && (hit_d < 0.0 || d < hit_d)) {
        hit_d = d;
        hit_h = height;
        hit_cls = cls;
      }
    };
    for (const auto& a : w.agents) {
      Vec2 q = w.to_ego(a.pos);
      double rel_h = a.heading - w.ego.heading;
      consider(ray_obb({0.0, 0.0}, dir, q, rel_h, a.length / 2.0, a.width / 2.0), kAgentHeight,
               1.0);
    }
    for (const auto& l : w.lights)
      consider(ray_circle({0.0, 0.0}, dir, w.to_ego(l.pos), 0.5), kLightHeight,
               l.is_red(w.t) ? 2.0 : 3.0);
    for (const auto& sg : w.signs)
      consider(ray_circle({0.0, 0.0}, dir, w.to_ego(sg.pos), 0.5), kSignHeight, 4.0);

    if (hit_d > 0.0) {
      double bottom = H / 2.0 + f * kCamHeight / hit_d;
      double top = bottom - f * hit_h / hit_d;
      int r0 = std::max(0, static_cast<int>(std::floor(top)));
      int r1 = std::min(H - 1, static_cast<int>(std::ceil(bottom)) - 1);
      for (int r = r0; r <= r1; ++r) {
        px(0, r, c) = std::min(1.0, 5.0 / hit_d);
        px(1, r, c) = hit_cls / 4.0;
      }
    }

    // ground-plane route mask below the horizon
    for (int r = H / 2; r < H; ++r) {
      double ground = f * kCamHeight / (r - H / 2.0 + 0.5);
      if (ground > kMaxRenderDepth) continue;
      Vec2 pt = w.to_world(dir * ground);
      double lat = 0.0;
      w.route.project(pt, nullptr, &lat);
      if (std::abs(lat) < kRouteHalfWidth) px(2, r, c) = std::min(1.0, 8.0 / ground);
    }
  }
  return Tensor::from({C, H, W}, std::move(img));
}

Tensor render_bev(const World& w, const ModelConfig& m) {
  if (m.bev_channels < 4) throw ConfigError("render_bev: needs at least 4 bev channels");
  int Cb = m.bev_channels, G = m.bev_cells;
  double res = m.bev_res_m();
  std::vector<double> bev(static_cast<std::size_t>(Cb) * G * G, 0.0);
  auto cell = [&](int ch, int r, int c) -> double& {
    return bev[(static_cast<std::size_t>(ch) * G + r) * G + c];
  };

  struct StopLine {
    Vec2 pos;
    double heading;
  };
  std::vector<StopLine> stop_lines;
  for (const auto& l : w.lights)
    if (l.is_red(w.t)) stop_lines.push_back({l.pos, w.route.heading_at(l.route_s)});
  for (const auto& sg : w.signs)
    if (!sg.satisfied) stop_lines.push_back({sg.pos, w.route.heading_at(sg.route_s)});

  for (int r = 0; r < G; ++r)
    for (int c = 0; c < G; ++c) {
      Vec2 pe = bev_cell_center(G, res, r, c);
      Vec2 pw = w.to_world(pe);
      for (const auto& a : w.agents) {
        Vec2 q = rotate(pw - a.pos, -a.heading);
        if (std::abs(q.x) <= a.length / 2.0 && std::abs(q.y) <= a.width / 2.0) {
          cell(0, r, c) = 1.0;
          cell(1, r, c) = a.speed / 10.0;
        }
      }
      double lat = 0.0;
      w.route.project(pw, nullptr, &lat);
      if (std::abs(lat) <= kRouteHalfWidth) cell(2, r, c) = 1.0;
      for (const auto& sl : stop_lines) {
        Vec2 q = rotate(pw - sl.pos, -sl.heading);
        if (std::abs(q.x) <= 0.6 && std::abs(q.y) <= 2.5) cell(3, r, c) = 1.0;
      }
    }
  return Tensor::from({Cb, G, G}, std::move(bev));
}

TrafficFlags traffic_flags(const World& w) {
  double s_ego = 0.0;
  w.route.project(w.ego.pos, &s_ego, nullptr);
  TrafficFlags f;
  for (const auto& l : w.lights) {
    double d = l.route_s - s_ego;
    if (d > -1.0 && d < 20.0 && l.is_red(w.t)) f.light = 1.0;
    if (std::abs(d) < 8.0) f.junction = 1.0;
  }
  for (const auto& sg : w.signs) {
    double d = sg.route_s - s_ego;
    if (!sg.satisfied && d > -1.0 && d < 20.0) f.stop = 1.0;
    if (std::abs(d) < 8.0) f.junction = 1.0;
  }
  for (const auto& a : w.agents)
    if (a.kind == Agent::Kind::crossing && std::abs(a.route_s - s_ego) < 10.0) f.junction = 1.0;
  return f;
}

std::vector<double> density_targets(const World& w, const ModelConfig& m) {
  int R = m.density_cells;
  double res = m.density_span_m / R;
  std::vector<double> out(static_cast<std::size_t>(R) * R * 7, 0.0);
  for (const auto& a : w.agents) {
    Vec2 q = w.to_ego(a.pos);
    int r = R - 1 - static_cast<int>(std::floor(q.x / res));
    int c = R / 2 - 1 - static_cast<int>(std::floor(q.y / res));
    if (r < 0 || r >= R || c < 0 || c >= R) continue;
    double xc = (R - r - 0.5) * res;
    double yc = (R / 2.0 - c - 0.5) * res;
    std::size_t at = (static_cast<std::size_t>(r) * R + c) * 7;
    out[at + 0] = 1.0;
    out[at + 1] = (q.x - xc) / res;
    out[at + 2] = (q.y - yc) / res;
    out[at + 3] = wrap_angle(a.heading - w.ego.heading) / kPi;
    out[at + 4] = a.speed / 10.0;
    out[at + 5] = a.width / 5.0;
    out[at + 6] = a.length / 5.0;
  }
  return out;
}

std::vector<double> gaze_targets(const World& w, const ModelConfig& m, double sigma_frac) {
  int H = m.image_h, W = m.image_w;
  CameraModel cam = make_camera(W, H, m.camera_fov_deg);

  Vec2 focus{10.0, 0.0};
  double best = 1e18;
  bool found = false;
  for (const auto& a : w.agents) {
    Vec2 q = w.to_ego(a.pos);
    if (cam.in_view(q) && q.norm() < 25.0 && q.norm() < best) {
      focus = q;
      best = q.norm();
      found = true;
    }
  }
  if (!found) {
    for (const auto& l : w.lights) {
      Vec2 q = w.to_ego(l.pos);
      if (l.is_red(w.t) && cam.in_view(q) && q.norm() < 30.0 && q.norm() < best) {
        focus = q;
        best = q.norm();
        found = true;
      }
    }
  }
  if (!found) {
    double s_ego = 0.0;
    w.route.project(w.ego.pos, &s_ego, nullptr);
    Vec2 q = w.to_ego(w.route.point_at(s_ego + 15.0));
    if (cam.in_view(q)) focus = q;
  }

  double c0 = cam.col_of_point(focus);
  double r0 = H / 2.0;
  double sigma = sigma_frac * W;
  std::vector<double> g(static_cast<std::size_t>(H) * W);
  double peak = 0.0;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double dr = (r + 0.5) - r0, dc = (c + 0.5) - c0;
      double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      g[static_cast<std::size_t>(r) * W + c] = v;
      peak = std::max(peak, v);
    }
  for (double& v : g) v /= peak;
  return g;
}

}  // namespace hgd
