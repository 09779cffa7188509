#ifndef DYNTRAJ_GAUSSIAN_MODIFIER_HPP_
#define DYNTRAJ_GAUSSIAN_MODIFIER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "dyntraj/vec3.hpp"

namespace dyntraj {

/// A modification request arrived exactly at the waypoint's traversal time;
/// the deformation width would collapse to zero.
class ModificationTooLate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The modifier width is chosen so the request time lands this many standard
/// deviations from the center, which makes the deformation negligible at the
/// instant it is switched on (exp(-3.5^2 / 2) ~ 2.2e-3 of the amplitude).
inline constexpr double kWidthRuleSigmas = 3.5;

/// Additive Gaussian-in-time displacement applied on top of a base
/// trajectory: amplitude * exp(-(t - center)^2 / (2 width^2)). Evaluated with
/// full support everywhere; no truncation, so the composite stays smooth.
struct GaussianModifier {
  Vec3 amplitude;            // meters, per axis
  double center = 0.0;       // seconds; the owning waypoint's traversal time
  double width = 1.0;        // seconds, strictly positive (standard deviation)
  std::int64_t waypoint_id = -1;

  GaussianModifier() = default;

  GaussianModifier(const Vec3& amplitude_, double center_, double width_,
                   std::int64_t waypoint_id_)
      : amplitude(amplitude_), center(center_), width(width_), waypoint_id(waypoint_id_) {
    if (!(width > 0.0)) throw std::invalid_argument("modifier width must be strictly positive");
  }

  /// Time derivative of order 0, 1 or 2 at t; exact closed forms.
  Vec3 evaluate(double t, int order = 0) const {
    const double u = (t - center) / width;
    const double g = std::exp(-0.5 * u * u);
    switch (order) {
      case 0:
        return amplitude * g;
      case 1:
        return amplitude * (-u / width * g);
      case 2:
        return amplitude * ((u * u - 1.0) / (width * width) * g);
      default:
        throw std::invalid_argument("modifier derivative order must be in [0, 2]");
    }
  }

  /// Fraction of the Gaussian's total integral within +-half_width_sigmas
  /// standard deviations of the center.
  double mass_fraction(double half_width_sigmas) const {
    if (half_width_sigmas < 0.0)
      throw std::invalid_argument("half width must be non-negative");
    return std::erf(half_width_sigmas / std::sqrt(2.0));
  }
};

/// Builds the modifier that moves a waypoint from its current effective
/// position to the requested one. The amplitude is the displacement, the
/// center is the waypoint's traversal time, and the width places the request
/// time at kWidthRuleSigmas standard deviations so the trajectory barely
/// changes at the moment of insertion.
///
/// `current_position` must be the waypoint's position under the *current
/// composite* trajectory (base plus previously stacked modifiers), so that
/// stacked amplitudes compose and the waypoint lands where requested.
inline GaussianModifier make_modifier(const Vec3& current_position, const Vec3& target_position,
                                      double waypoint_time, double request_time,
                                      std::int64_t waypoint_id) {
  if (request_time == waypoint_time)
    throw ModificationTooLate("modification requested exactly at the waypoint time");
  const double width = std::abs(request_time - waypoint_time) / kWidthRuleSigmas;
  return GaussianModifier(target_position - current_position, waypoint_time, width, waypoint_id);
}

/// Sum of a stack of modifiers at time t (the double sum of the composite
/// trajectory, flattened).
inline Vec3 evaluate_stack(std::span<const GaussianModifier> modifiers, double t, int order = 0) {
  Vec3 total;
  for (const GaussianModifier& m : modifiers) total += m.evaluate(t, order);
  return total;
}

}  // namespace dyntraj

#endif  // DYNTRAJ_GAUSSIAN_MODIFIER_HPP_
