#include "hgdrive/control.hpp"

#include <cmath>

namespace hgd {
namespace {

constexpr double kHeadKp = 1.0;
constexpr double kHeadKi = 0.1;
constexpr double kHeadKd = 0.1;
constexpr double kSpeedKp = 0.5;
constexpr double kSpeedKi = 0.05;
constexpr double kIntegratorClamp = 10.0;
constexpr double kStopSpeed = 0.5;  // implied speeds below this mean "hold still"
constexpr double kBrakeCmd = -0.25;  // speed-PI command below this engages the brake

}  // namespace

Control track_waypoints(PidState& st, const Waypoints& wp, double current_v,
                        double frame_rate_hz, double dt) {
  Control u;

  Vec2 target = (wp[0] + wp[1]) * 0.5;
  double head_err = (target.norm() > 0.05) ? std::atan2(target.y, target.x) : 0.0;
  st.i_head = clamp(st.i_head + head_err * dt, -kIntegratorClamp, kIntegratorClamp);
  double d_head = st.first ? 0.0 : (head_err - st.prev_head) / dt;
  st.prev_head = head_err;
  // positive bearing error means the target is to the left; negative steering
  // turns left
  u.steer = clamp(-(kHeadKp * head_err + kHeadKi * st.i_head + kHeadKd * d_head), -1.0, 1.0);

  // The brake is binary: full stop below the hold threshold, a hard
  // correction when the PI command demands real deceleration, coasting in
  // between.
  double spacing = (wp[0].norm() + (wp[1] - wp[0]).norm()) / 2.0;
  double desired_v = spacing * frame_rate_hz;
  if (desired_v < kStopSpeed) {
    u.throttle = 0.0;
    u.brake = 1.0;
    st.i_v = 0.0;
  } else {
    double err = desired_v - current_v;
    st.i_v = clamp(st.i_v + err * dt, -kIntegratorClamp, kIntegratorClamp);
    double cmd = kSpeedKp * err + kSpeedKi * st.i_v;
    if (cmd >= 0.0) {
      u.throttle = clamp(cmd, 0.0, 1.0);
    } else if (cmd < kBrakeCmd) {
      u.brake = 1.0;
      st.i_v = 0.0;
    }
  }
  st.first = false;
  return u;
}

}  // namespace hgd
