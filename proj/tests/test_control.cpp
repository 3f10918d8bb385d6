#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hgdrive/control.hpp"
#include "hgdrive/rng.hpp"
#include "hgdrive/types.hpp"

using namespace hgd;

namespace {

constexpr double kHz = 2.0;
constexpr double kDt = 0.5;

Waypoints straight(double step) {
  return {Vec2{step, 0.0}, Vec2{2 * step, 0.0}, Vec2{3 * step, 0.0}};
}

}  // namespace

TEST_CASE("straight waypoints need no steering") {
  PidState st;
  Control u = track_waypoints(st, straight(3.0), 5.0, kHz, kDt);
  CHECK(u.steer == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a target to the left steers negative") {
  PidState st;
  Waypoints wp = {Vec2{4.0, 1.5}, Vec2{8.0, 3.0}, Vec2{12.0, 4.5}};
  Control u = track_waypoints(st, wp, 5.0, kHz, kDt);
  CHECK(u.steer < 0.0);

  PidState st2;
  Waypoints right = {Vec2{4.0, -1.5}, Vec2{8.0, -3.0}, Vec2{12.0, -4.5}};
  Control u2 = track_waypoints(st2, right, 5.0, kHz, kDt);
  CHECK(u2.steer > 0.0);
}

TEST_CASE("steering is mirror symmetric") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Waypoints wp;
    for (int i = 0; i < 3; ++i)
      wp[i] = {rng.uniform(0.5, 10.0) * (i + 1), rng.uniform(-4.0, 4.0)};
    Waypoints mirrored = wp;
    for (int i = 0; i < 3; ++i) mirrored[i].y = -mirrored[i].y;
    double v = rng.uniform(0.0, 8.0);
    PidState a, b;
    Control ua = track_waypoints(a, wp, v, kHz, kDt);
    Control ub = track_waypoints(b, mirrored, v, kHz, kDt);
    CHECK(ua.steer == doctest::Approx(-ub.steer).epsilon(1e-12));
    CHECK(ua.throttle == ub.throttle);
    CHECK(ua.brake == ub.brake);
  }
}

TEST_CASE("waypoints on the ego demand a full stop") {
  PidState st;
  Waypoints wp = {Vec2{0.0, 0.0}, Vec2{0.0, 0.0}, Vec2{0.0, 0.0}};
  Control u = track_waypoints(st, wp, 4.0, kHz, kDt);
  CHECK(u.brake == 1.0);
  CHECK(u.throttle == 0.0);
}

TEST_CASE("speed control accelerates, coasts, or brakes hard") {
  // Far waypoints and low speed: accelerate.
  PidState st;
  Control u = track_waypoints(st, straight(4.0), 0.0, kHz, kDt);
  CHECK(u.throttle > 0.0);
  CHECK(u.brake == 0.0);

  // Mild overspeed coasts rather than braking.
  PidState st2;
  Control u2 = track_waypoints(st2, straight(2.0), 4.3, kHz, kDt);
  CHECK(u2.throttle == 0.0);
  CHECK(u2.brake == 0.0);

  // Strong overspeed engages the binary brake.
  PidState st3;
  Control u3 = track_waypoints(st3, straight(1.0), 10.0, kHz, kDt);
  CHECK(u3.brake == 1.0);
  CHECK(u3.throttle == 0.0);
}

TEST_CASE("commands stay in range and the brake stays binary") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    PidState st;
    for (int step = 0; step < 5; ++step) {
      Waypoints wp;
      for (int i = 0; i < 3; ++i) wp[i] = {rng.uniform(-2.0, 20.0), rng.uniform(-6.0, 6.0)};
      Control u = track_waypoints(st, wp, rng.uniform(0.0, 10.0), kHz, kDt);
      CHECK(u.steer >= -1.0);
      CHECK(u.steer <= 1.0);
      CHECK(u.throttle >= 0.0);
      CHECK(u.throttle <= 1.0);
      CHECK((u.brake == 0.0 || u.brake == 1.0));
      CHECK_FALSE((u.throttle > 0.0 && u.brake > 0.0));
    }
  }
}

TEST_CASE("controller state evolves deterministically") {
  PidState a, b;
  Waypoints wp = {Vec2{3.0, 0.5}, Vec2{6.0, 1.2}, Vec2{9.0, 1.8}};
  for (int i = 0; i < 10; ++i) {
    Control ua = track_waypoints(a, wp, 2.0 + 0.3 * i, kHz, kDt);
    Control ub = track_waypoints(b, wp, 2.0 + 0.3 * i, kHz, kDt);
    CHECK(ua.steer == ub.steer);
    CHECK(ua.throttle == ub.throttle);
    CHECK(ua.brake == ub.brake);
  }
  // The integrator accumulates: repeated error grows the correction.
  PidState st;
  Control first = track_waypoints(st, wp, 2.0, kHz, kDt);
  Control later = first;
  for (int i = 0; i < 20; ++i) later = track_waypoints(st, wp, 2.0, kHz, kDt);
  CHECK(std::abs(later.steer) > std::abs(first.steer));
}
