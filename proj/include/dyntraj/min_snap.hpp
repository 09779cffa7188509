#ifndef DYNTRAJ_MIN_SNAP_HPP_
#define DYNTRAJ_MIN_SNAP_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dyntraj/piecewise_polynomial.hpp"
#include "dyntraj/waypoint.hpp"

namespace dyntraj {

/// Raised when the constraint system of a trajectory solve is singular or
/// ill conditioned. Carries the segment index closest to the defect.
class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, int segment_index)
      : std::runtime_error(what + " (segment " + std::to_string(segment_index) + ")"),
        segment_index_(segment_index) {}

  int segment_index() const { return segment_index_; }

 private:
  int segment_index_;
};

namespace detail {

constexpr int kNumCoeff = PiecewisePolynomial::kCoefficientCount;  // 8
constexpr int kSnapOrder = 4;
constexpr int kSharedDerivatives = 4;  // position..jerk shared at knots
constexpr double kPivotTolerance = 1e-12;

inline double permutation_factor(int i, int k) {
  double f = 1.0;
  for (int m = 0; m < k; ++m) f *= static_cast<double>(i - m);
  return f;
}

/// Maps tau-basis coefficients to endpoint tau-derivatives 0..3 at tau=0,1.
inline const Eigen::Matrix<double, 8, 8>& endpoint_map_inverse() {
  static const Eigen::Matrix<double, 8, 8> inv = [] {
    Eigen::Matrix<double, 8, 8> map = Eigen::Matrix<double, 8, 8>::Zero();
    for (int k = 0; k < kSharedDerivatives; ++k) {
      map(k, k) = permutation_factor(k, k);  // tau = 0
      for (int i = k; i < kNumCoeff; ++i) map(4 + k, i) = permutation_factor(i, k);  // tau = 1
    }
    return map.inverse().eval();
  }();
  return inv;
}

/// Gram matrix of the squared snap integral over tau in [0, 1].
inline const Eigen::Matrix<double, 8, 8>& snap_gram() {
  static const Eigen::Matrix<double, 8, 8> gram = [] {
    Eigen::Matrix<double, 8, 8> q = Eigen::Matrix<double, 8, 8>::Zero();
    for (int a = kSnapOrder; a < kNumCoeff; ++a)
      for (int b = kSnapOrder; b < kNumCoeff; ++b)
        q(a, b) = permutation_factor(a, kSnapOrder) * permutation_factor(b, kSnapOrder) /
                  static_cast<double>(a + b - 2 * kSnapOrder + 1);
    return q;
  }();
  return gram;
}

}  // namespace detail

/// Allocates knot times for an ordered waypoint sequence: per-segment duration
/// is the larger of the cruise bound (distance / max_speed) and the
/// accelerate-from-rest bound sqrt(2 distance / max_acceleration), padded by a
/// global factor. Coincident or near-coincident consecutive waypoints receive
/// a fixed minimum duration instead of a degenerate one. Times start at 0.
inline std::vector<double> allocate_segment_times(const std::vector<WaypointConstraint>& waypoints,
                                                  const DynamicsLimits& limits) {
  if (waypoints.size() < 2)
    throw std::invalid_argument("time allocation requires at least two waypoints");
  limits.require_valid();

  constexpr double kPadding = 1.2;
  constexpr double kMinSegmentDuration = 0.1;

  std::vector<double> knots;
  knots.reserve(waypoints.size());
  knots.push_back(0.0);
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const double distance = (waypoints[i + 1].position - waypoints[i].position).norm();
    const double cruise = distance / limits.max_speed;
    const double ramp = std::sqrt(2.0 * distance / limits.max_acceleration);
    const double duration = std::max(kPadding * std::max(cruise, ramp), kMinSegmentDuration);
    knots.push_back(knots.back() + duration);
  }
  return knots;
}

/// Solves the minimum-snap piecewise degree-7 polynomial through the waypoint
/// sequence at the given knot times. Endpoint derivatives default to rest
/// (zero velocity/acceleration/jerk) where unspecified; interior waypoints may
/// pin velocity and/or acceleration. Free interior derivatives are eliminated
/// through one dense symmetric solve of the snap-cost normal equations.
inline PiecewisePolynomial solve_min_snap(const std::vector<WaypointConstraint>& waypoints,
                                          const std::vector<double>& knots) {
  using detail::kNumCoeff;
  using detail::kSharedDerivatives;

  const std::size_t n_wp = waypoints.size();
  if (n_wp < 2) throw std::invalid_argument("min-snap solve requires at least two waypoints");
  if (knots.size() != n_wp)
    throw std::invalid_argument("one knot time is required per waypoint");
  const std::size_t n_seg = n_wp - 1;
  for (std::size_t j = 0; j < n_seg; ++j)
    if (!(knots[j + 1] > knots[j]))
      throw SolveError("knot times must be strictly increasing", static_cast<int>(j));

  // Global derivative grid: orders 0..3 at every knot, in real time.
  const auto slot = [](std::size_t wp, int order) {
    return static_cast<int>(wp) * kSharedDerivatives + order;
  };
  const int n_slots = static_cast<int>(n_wp) * kSharedDerivatives;

  std::vector<int> fixed_index(static_cast<std::size_t>(n_slots), -1);
  std::vector<int> free_index(static_cast<std::size_t>(n_slots), -1);
  std::vector<Eigen::Vector3d> fixed_values;

  const auto pin = [&](std::size_t wp, int order, const Vec3& v) {
    fixed_index[static_cast<std::size_t>(slot(wp, order))] = static_cast<int>(fixed_values.size());
    fixed_values.emplace_back(v.x, v.y, v.z);
  };

  for (std::size_t i = 0; i < n_wp; ++i) {
    const WaypointConstraint& wp = waypoints[i];
    if (!wp.position.is_finite()) throw std::invalid_argument("waypoint position must be finite");
    pin(i, 0, wp.position);
    const bool endpoint = (i == 0 || i + 1 == n_wp);
    if (endpoint) {
      pin(i, 1, wp.velocity.value_or(Vec3{}));
      pin(i, 2, wp.acceleration.value_or(Vec3{}));
      // Rest-style endpoints (no derivatives supplied) start and end with
      // zero jerk. A fully specified boundary state, such as a stitching
      // sample of a live trajectory, pins only position/velocity/
      // acceleration; forcing zero jerk there would kink the handover.
      if (!wp.velocity || !wp.acceleration) pin(i, 3, Vec3{});
    } else {
      if (wp.velocity) pin(i, 1, *wp.velocity);
      if (wp.acceleration) pin(i, 2, *wp.acceleration);
    }
  }
  int n_free = 0;
  for (int s = 0; s < n_slots; ++s)
    if (fixed_index[static_cast<std::size_t>(s)] < 0) free_index[static_cast<std::size_t>(s)] = n_free++;
  const int n_fixed = static_cast<int>(fixed_values.size());

  // Assemble the quadratic snap cost over global derivative slots. Segment
  // cost in scaled local derivatives d is d^T (Ainv^T Q Ainv) d / T^7, and a
  // slot of order k maps to a local derivative scaled by T^k.
  const Eigen::Matrix<double, 8, 8>& map_inv = detail::endpoint_map_inverse();
  const Eigen::Matrix<double, 8, 8> base_cost = map_inv.transpose() * detail::snap_gram() * map_inv;

  Eigen::MatrixXd h_fp = Eigen::MatrixXd::Zero(n_fixed, n_free);
  Eigen::MatrixXd h_pp = Eigen::MatrixXd::Zero(n_free, n_free);

  std::array<int, 8> seg_slot{};
  std::array<double, 8> seg_scale{};
  for (std::size_t j = 0; j < n_seg; ++j) {
    const double duration = knots[j + 1] - knots[j];
    double t_pow = 1.0;
    std::array<double, kSharedDerivatives> duration_pow{};
    for (int k = 0; k < kSharedDerivatives; ++k, t_pow *= duration) duration_pow[static_cast<std::size_t>(k)] = t_pow;
    const double inv_t7 = 1.0 / std::pow(duration, 7);

    for (int k = 0; k < kSharedDerivatives; ++k) {
      seg_slot[static_cast<std::size_t>(k)] = slot(j, k);
      seg_slot[static_cast<std::size_t>(4 + k)] = slot(j + 1, k);
      seg_scale[static_cast<std::size_t>(k)] = seg_scale[static_cast<std::size_t>(4 + k)] =
          duration_pow[static_cast<std::size_t>(k)];
    }
    for (int r = 0; r < 8; ++r) {
      const int sr = seg_slot[static_cast<std::size_t>(r)];
      const double wr = seg_scale[static_cast<std::size_t>(r)];
      for (int c = 0; c < 8; ++c) {
        const int sc = seg_slot[static_cast<std::size_t>(c)];
        const double v = wr * base_cost(r, c) * seg_scale[static_cast<std::size_t>(c)] * inv_t7;
        const int fr = fixed_index[static_cast<std::size_t>(sr)];
        const int fc = fixed_index[static_cast<std::size_t>(sc)];
        if (fr >= 0 && fc < 0)
          h_fp(fr, free_index[static_cast<std::size_t>(sc)]) += v;
        else if (fr < 0 && fc < 0)
          h_pp(free_index[static_cast<std::size_t>(sr)], free_index[static_cast<std::size_t>(sc)]) += v;
      }
    }
  }

  Eigen::MatrixXd fixed_mat(n_fixed, 3);
  for (int i = 0; i < n_fixed; ++i) fixed_mat.row(i) = fixed_values[static_cast<std::size_t>(i)].transpose();

  Eigen::MatrixXd free_mat(n_free, 3);
  if (n_free > 0) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(h_pp);
    const double scale = h_pp.cwiseAbs().maxCoeff();
    const double min_pivot = ldlt.vectorD().cwiseAbs().minCoeff();
    if (ldlt.info() != Eigen::Success || !(min_pivot > detail::kPivotTolerance * std::max(scale, 1.0))) {
      // Attribute the defect to the knot owning the weakest pivot.
      int arg = 0;
      ldlt.vectorD().cwiseAbs().minCoeff(&arg);
      Eigen::VectorXi order = Eigen::VectorXi::LinSpaced(n_free, 0, n_free - 1);
      order = ldlt.transpositionsP() * order;
      int offending_free = order[arg];
      int seg = static_cast<int>(n_seg) - 1;
      for (int s = 0; s < n_slots; ++s) {
        if (free_index[static_cast<std::size_t>(s)] == offending_free) {
          seg = std::min(s / kSharedDerivatives, static_cast<int>(n_seg) - 1);
          break;
        }
      }
      throw SolveError("min-snap normal equations are singular or ill conditioned", seg);
    }
    free_mat = ldlt.solve(-(h_fp.transpose() * fixed_mat));
  }

  // Recover tau-basis coefficients segment by segment.
  std::vector<PiecewisePolynomial::Segment> segments(n_seg);
  Eigen::Matrix<double, 8, 3> local;
  for (std::size_t j = 0; j < n_seg; ++j) {
    const double duration = knots[j + 1] - knots[j];
    double t_pow = 1.0;
    std::array<double, kSharedDerivatives> duration_pow{};
    for (int k = 0; k < kSharedDerivatives; ++k, t_pow *= duration) duration_pow[static_cast<std::size_t>(k)] = t_pow;
    for (int k = 0; k < kSharedDerivatives; ++k) {
      const int s0 = slot(j, k);
      const int s1 = slot(j + 1, k);
      const auto row_of = [&](int s) -> Eigen::RowVector3d {
        const int fi = fixed_index[static_cast<std::size_t>(s)];
        if (fi >= 0) return fixed_mat.row(fi);
        return free_mat.row(free_index[static_cast<std::size_t>(s)]);
      };
      local.row(k) = row_of(s0) * duration_pow[static_cast<std::size_t>(k)];
      local.row(4 + k) = row_of(s1) * duration_pow[static_cast<std::size_t>(k)];
    }
    const Eigen::Matrix<double, 8, 3> coeffs = map_inv * local;
    for (int a = 0; a < 3; ++a)
      for (int i = 0; i < kNumCoeff; ++i)
        segments[j].axis[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] = coeffs(i, a);
  }

  return PiecewisePolynomial(knots, std::move(segments));
}

/// Integral of squared snap over the whole trajectory, summed across axes.
inline double snap_cost(const PiecewisePolynomial& traj) {
  const Eigen::Matrix<double, 8, 8>& gram = detail::snap_gram();
  double total = 0.0;
  for (std::size_t j = 0; j < traj.segment_count(); ++j) {
    const double duration = traj.knots()[j + 1] - traj.knots()[j];
    const double inv_t7 = 1.0 / std::pow(duration, 7);
    for (int a = 0; a < 3; ++a) {
      Eigen::Map<const Eigen::Matrix<double, 8, 1>> c(traj.segment(j).axis[static_cast<std::size_t>(a)].data());
      total += c.dot(gram * c) * inv_t7;
    }
  }
  return total;
}

struct GeneratedTrajectory {
  PiecewisePolynomial trajectory;
  int feasibility_iterations = 0;  // re-solves triggered by limit violations
  bool limits_satisfied = true;
};

namespace detail {

/// Checks sampled speed/acceleration against the limits. Sampling runs at the
/// rate the trajectory is consumed (1 kHz), capped to keep pathological spans
/// affordable.
inline bool limits_ok(const PiecewisePolynomial& traj, const DynamicsLimits& limits) {
  constexpr double kSampleStep = 1e-3;
  constexpr std::size_t kMaxSamples = 200000;
  const double span = traj.duration();
  const double step = std::max(kSampleStep, span / static_cast<double>(kMaxSamples));
  const double v2 = limits.max_speed * limits.max_speed * (1.0 + 1e-9);
  const double a2 = limits.max_acceleration * limits.max_acceleration * (1.0 + 1e-9);
  for (double t = traj.start_time(); t <= traj.end_time(); t += step) {
    if (traj.evaluate(t, 1).squared_norm() > v2) return false;
    if (traj.evaluate(t, 2).squared_norm() > a2) return false;
  }
  return true;
}

}  // namespace detail

/// Full base-trajectory generation: allocate knot times, solve, then verify
/// the sampled speed/acceleration envelope; on violation stretch all segment
/// durations by 1.1 and re-solve, up to 10 rounds.
inline GeneratedTrajectory generate_min_snap(const std::vector<WaypointConstraint>& waypoints,
                                             const DynamicsLimits& limits) {
  constexpr int kMaxRounds = 10;
  constexpr double kStretch = 1.1;

  std::vector<double> knots = allocate_segment_times(waypoints, limits);
  GeneratedTrajectory result;
  result.trajectory = solve_min_snap(waypoints, knots);
  for (int round = 0; round < kMaxRounds; ++round) {
    if (detail::limits_ok(result.trajectory, limits)) return result;
    for (std::size_t i = 1; i < knots.size(); ++i)
      knots[i] = knots[i - 1] + (result.trajectory.knots()[i] - result.trajectory.knots()[i - 1]) * kStretch;
    result.trajectory = solve_min_snap(waypoints, knots);
    ++result.feasibility_iterations;
  }
  result.limits_satisfied = detail::limits_ok(result.trajectory, limits);
  return result;
}

}  // namespace dyntraj

#endif  // DYNTRAJ_MIN_SNAP_HPP_
