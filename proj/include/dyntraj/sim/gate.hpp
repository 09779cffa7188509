#ifndef DYNTRAJ_SIM_GATE_HPP_
#define DYNTRAJ_SIM_GATE_HPP_

#include <cmath>
#include <string>

#include "dyntraj/sim/vehicle.hpp"
#include "dyntraj/vec3.hpp"

namespace dyntraj::sim {

/// Side-to-side gate motion: a triangle wave along a unit axis, moving at
/// constant speed and reversing at +-amplitude. Phase shifts the wave origin.
struct GateMotion {
  Vec3 axis{0.0, 0.0, 0.0};
  double amplitude = 0.0;  // meters
  double speed = 0.0;      // m/s
  double phase = 0.0;      // seconds
};

struct Gate {
  std::string name;
  Vec3 center;
  Vec3 normal{1.0, 0.0, 0.0};  // unit, roughly along the direction of travel
  double half_width = 0.75;    // meters
  GateMotion motion;
};

/// Offset of the triangle wave at time t: zero at t=0 (phase 0), slope
/// +-speed almost everywhere, clamped to [-amplitude, amplitude].
inline double triangle_offset(const GateMotion& motion, double t) {
  if (motion.amplitude <= 0.0 || motion.speed <= 0.0) return 0.0;
  double u = std::fmod((t + motion.phase) * motion.speed, 4.0 * motion.amplitude);
  if (u < 0.0) u += 4.0 * motion.amplitude;
  if (u < motion.amplitude) return u;
  if (u < 3.0 * motion.amplitude) return 2.0 * motion.amplitude - u;
  return u - 4.0 * motion.amplitude;
}

inline Vec3 gate_position(const Gate& gate, double t) {
  return gate.center + gate.motion.axis * triangle_offset(gate.motion, t);
}

enum class CrossingResult { kNoCrossing, kPass, kMiss };

struct CrossingCheck {
  CrossingResult result = CrossingResult::kNoCrossing;
  Vec3 crossing_point;
  double crossing_time = 0.0;
  double offset_distance = 0.0;  // in-plane distance from the moving gate center
};

/// Detects the vehicle crossing the gate plane between two consecutive states
/// and classifies it. The crossing point is linearly interpolated on the
/// signed plane distance, which is exact for straight-line motion and
/// in-plane gate movement.
inline CrossingCheck check_gate_pass(const VehicleState& prev, const VehicleState& next,
                                     const Gate& gate, double pass_tolerance) {
  CrossingCheck check;
  const double s_prev = (prev.position - gate_position(gate, prev.t)).dot(gate.normal);
  const double s_next = (next.position - gate_position(gate, next.t)).dot(gate.normal);
  if ((s_prev <= 0.0) == (s_next <= 0.0) || s_prev == s_next) return check;

  const double theta = s_prev / (s_prev - s_next);
  check.crossing_time = prev.t + theta * (next.t - prev.t);
  check.crossing_point = prev.position + (next.position - prev.position) * theta;
  const Vec3 offset = check.crossing_point - gate_position(gate, check.crossing_time);
  const Vec3 in_plane = offset - gate.normal * offset.dot(gate.normal);
  check.offset_distance = in_plane.norm();
  check.result = check.offset_distance <= gate.half_width + pass_tolerance
                     ? CrossingResult::kPass
                     : CrossingResult::kMiss;
  return check;
}

}  // namespace dyntraj::sim

#endif  // DYNTRAJ_SIM_GATE_HPP_
