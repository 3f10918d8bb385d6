#pragma once

#include "hgdrive/simdata.hpp"
#include "hgdrive/types.hpp"

namespace hgd {

// PID state for one episode; reset between episodes.
struct PidState {
  double i_head = 0.0;
  double prev_head = 0.0;
  double i_v = 0.0;
  bool first = true;
};

// Turns predicted waypoints into actuation. Steering follows a PID on the
// bearing to the midpoint of the first two waypoints; speed follows a PI on
// the gap between the current speed and the spacing-implied speed. A
// near-zero implied speed switches to a firm stop.
Control track_waypoints(PidState& st, const Waypoints& wp, double current_v, double frame_rate_hz,
                        double dt);

}  // namespace hgd
