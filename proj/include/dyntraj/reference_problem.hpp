#ifndef DYNTRAJ_REFERENCE_PROBLEM_HPP_
#define DYNTRAJ_REFERENCE_PROBLEM_HPP_

#include <cstddef>
#include <vector>

#include "dyntraj/waypoint.hpp"

namespace dyntraj {

/// Canonical multi-waypoint problem used to seed the computation-time
/// estimator at cold start and by the benchmark harness: a 3D zigzag with a
/// few meters between consecutive waypoints.
inline std::vector<WaypointConstraint> make_reference_waypoints(int count) {
  std::vector<WaypointConstraint> waypoints;
  waypoints.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double s = static_cast<double>(i);
    const double side = (i % 2 == 0) ? 1.0 : -1.0;
    waypoints.emplace_back(Vec3{4.0 * s, 2.5 * side, 1.5 + 0.5 * side});
  }
  return waypoints;
}

inline DynamicsLimits reference_limits() { return DynamicsLimits{5.0, 5.0}; }

}  // namespace dyntraj

#endif  // DYNTRAJ_REFERENCE_PROBLEM_HPP_
