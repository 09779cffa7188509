#ifndef DYNTRAJ_SIM_VEHICLE_HPP_
#define DYNTRAJ_SIM_VEHICLE_HPP_

#include <cmath>
#include <stdexcept>

#include "dyntraj/vec3.hpp"

namespace dyntraj::sim {

/// Point-mass tracker state. Stands in for the closed-loop vehicle: the
/// position error with respect to the reference decays first order with the
/// tracker lag as time constant.
struct VehicleState {
  Vec3 position;
  Vec3 velocity;
  double t = 0.0;
};

/// Advances the tracker one step against the sampled reference. The model is
/// the first-order error ODE p' = v_ref + (p_ref - p) / tracker_lag,
/// integrated exactly over dt with the reference extrapolated linearly; a
/// zero lag snaps to the reference (exact tracking).
inline VehicleState step_vehicle(const VehicleState& state, const Vec3& reference_position,
                                 const Vec3& reference_velocity, double dt, double tracker_lag) {
  if (!(dt > 0.0)) throw std::invalid_argument("vehicle step requires dt > 0");
  VehicleState next;
  next.t = state.t + dt;
  const Vec3 ref_end = reference_position + reference_velocity * dt;
  if (tracker_lag <= 0.0) {
    next.position = ref_end;
    next.velocity = reference_velocity;
    return next;
  }
  const double decay = std::exp(-dt / tracker_lag);
  const Vec3 error = (state.position - reference_position) * decay;
  next.position = ref_end + error;
  next.velocity = reference_velocity - error / tracker_lag;
  return next;
}

}  // namespace dyntraj::sim

#endif  // DYNTRAJ_SIM_VEHICLE_HPP_
