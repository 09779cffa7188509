#ifndef DYNTRAJ_WAYPOINT_HPP_
#define DYNTRAJ_WAYPOINT_HPP_

#include <optional>
#include <stdexcept>

#include "dyntraj/vec3.hpp"

namespace dyntraj {

/// A waypoint the trajectory must interpolate. Velocity and acceleration are
/// optional pass-through constraints; when absent at the trajectory endpoints
/// they default to zero (rest-to-rest).
struct WaypointConstraint {
  Vec3 position;
  std::optional<Vec3> velocity;
  std::optional<Vec3> acceleration;

  WaypointConstraint() = default;
  explicit WaypointConstraint(Vec3 pos) : position(pos) {}
  WaypointConstraint(Vec3 pos, Vec3 vel, Vec3 acc)
      : position(pos), velocity(vel), acceleration(acc) {}
};

/// Kinodynamic envelope used for segment time allocation and post-solve
/// feasibility checks of base trajectories.
struct DynamicsLimits {
  double max_speed = 1.0;         // m/s
  double max_acceleration = 1.0;  // m/s^2

  bool valid() const {
    return max_speed > 0.0 && max_acceleration > 0.0 && std::isfinite(max_speed) &&
           std::isfinite(max_acceleration);
  }

  void require_valid() const {
    if (!valid()) throw std::invalid_argument("dynamics limits must be strictly positive");
  }
};

}  // namespace dyntraj

#endif  // DYNTRAJ_WAYPOINT_HPP_
