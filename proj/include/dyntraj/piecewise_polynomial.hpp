#ifndef DYNTRAJ_PIECEWISE_POLYNOMIAL_HPP_
#define DYNTRAJ_PIECEWISE_POLYNOMIAL_HPP_

#include <algorithm>
#include <array>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dyntraj/vec3.hpp"

namespace dyntraj {

/// Piecewise degree-7 polynomial in time, one polynomial per axis per
/// segment. Coefficients are stored in normalized segment-local time
/// tau = (t - t_j) / T_j, which keeps evaluation and solving well conditioned
/// independent of the absolute time scale.
///
/// Evaluation outside [start_time, end_time] clamps: position holds the
/// nearest endpoint, derivatives return zero (a sampler overrunning the
/// trajectory receives a hold-position setpoint).
class PiecewisePolynomial {
 public:
  static constexpr int kDegree = 7;
  static constexpr int kCoefficientCount = kDegree + 1;
  static constexpr int kMaxDerivative = 4;

  using AxisCoefficients = std::array<double, kCoefficientCount>;

  struct Segment {
    std::array<AxisCoefficients, 3> axis;  // x, y, z
  };

  PiecewisePolynomial() = default;

  PiecewisePolynomial(std::vector<double> knots, std::vector<Segment> segments)
      : knots_(std::move(knots)), segments_(std::move(segments)) {
    if (knots_.size() != segments_.size() + 1 || segments_.empty())
      throw std::invalid_argument("knot count must be segment count + 1");
    for (std::size_t j = 0; j + 1 < knots_.size(); ++j)
      if (!(knots_[j + 1] > knots_[j]))
        throw std::invalid_argument("knots must be strictly increasing");
  }

  /// Single constant-position segment, handy for tests and degenerate holds.
  static PiecewisePolynomial constant(const Vec3& value, double t0 = 0.0, double t1 = 1.0) {
    Segment seg{};
    for (int a = 0; a < 3; ++a) seg.axis[a][0] = value[a];
    return PiecewisePolynomial({t0, t1}, {seg});
  }

  bool empty() const { return segments_.empty(); }
  std::size_t segment_count() const { return segments_.size(); }
  const std::vector<double>& knots() const { return knots_; }
  const Segment& segment(std::size_t j) const { return segments_[j]; }

  double start_time() const { return knots_.front(); }
  double end_time() const { return knots_.back(); }
  double duration() const { return knots_.back() - knots_.front(); }

  /// order-th time derivative at t (order 0 is position), with out-of-range
  /// clamping as described above.
  Vec3 evaluate(double t, int order = 0) const {
    check_order(order);
    if (t < knots_.front()) {
      return order == 0 ? evaluate_segment(0, knots_.front(), 0) : Vec3{};
    }
    if (t > knots_.back()) {
      return order == 0 ? evaluate_segment(segments_.size() - 1, knots_.back(), 0) : Vec3{};
    }
    return evaluate_segment(segment_index(t), t, order);
  }

  /// Evaluate a specific segment's polynomial, without clamping. Evaluating
  /// segment j and j+1 at their shared knot exposes joint continuity.
  Vec3 evaluate_segment(std::size_t j, double t, int order = 0) const {
    check_order(order);
    const double duration_j = knots_[j + 1] - knots_[j];
    const double tau = (t - knots_[j]) / duration_j;
    Vec3 out;
    for (int a = 0; a < 3; ++a) out[a] = eval_axis(segments_[j].axis[a], tau, order, duration_j);
    return out;
  }

  /// Index of the segment whose half-open interval [t_j, t_{j+1}) contains t;
  /// the final knot maps to the last segment.
  std::size_t segment_index(double t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    const auto raw = static_cast<std::ptrdiff_t>(it - knots_.begin()) - 1;
    return static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(raw, 0, static_cast<std::ptrdiff_t>(segments_.size()) - 1));
  }

  /// Shift the whole time axis by delta (knots only; coefficients are local).
  PiecewisePolynomial shifted(double delta) const {
    PiecewisePolynomial out(*this);
    for (double& k : out.knots_) k += delta;
    return out;
  }

 private:
  static void check_order(int order) {
    if (order < 0 || order > kMaxDerivative)
      throw std::invalid_argument("derivative order must be in [0, 4]");
  }

  static double eval_axis(const AxisCoefficients& c, double tau, int order, double duration) {
    // Horner evaluation of the order-th tau-derivative, then chain rule.
    double acc = 0.0;
    for (int i = kDegree; i >= order; --i) {
      double f = 1.0;
      for (int k = 0; k < order; ++k) f *= static_cast<double>(i - k);
      acc = acc * tau + c[static_cast<std::size_t>(i)] * f;
    }
    double scale = 1.0;
    for (int k = 0; k < order; ++k) scale /= duration;
    return acc * scale;
  }

  std::vector<double> knots_;
  std::vector<Segment> segments_;
};

/// Total time span covered by the trajectory.
inline double poly_duration(const PiecewisePolynomial& traj) { return traj.duration(); }

}  // namespace dyntraj

#endif  // DYNTRAJ_PIECEWISE_POLYNOMIAL_HPP_
