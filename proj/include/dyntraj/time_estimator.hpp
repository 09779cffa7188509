#ifndef DYNTRAJ_TIME_ESTIMATOR_HPP_
#define DYNTRAJ_TIME_ESTIMATOR_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace dyntraj {

/// Solve-time profile of a laptop-class machine, used to calibrate the
/// power-law fallback and to drive the deterministic virtual-time model:
/// (waypoint count, seconds).
inline constexpr std::array<std::pair<int, double>, 3> kReferenceSolveProfile{
    {{6, 0.01371}, {14, 0.08893}, {26, 0.30908}}};

/// Online estimate of how long a base-trajectory solve takes as a function of
/// waypoint count. Keeps a running mean per count; unseen counts are
/// extrapolated from the nearest observed one with a power law whose exponent
/// is the least-squares fit of kReferenceSolveProfile in log-log space.
///
/// An optional inflation term is added to every reported estimate (not to the
/// recorded samples), emulating a slower machine.
class ComputationTimeEstimator {
 public:
  static constexpr double kScalingExponent = 2.1295;

  void record(int waypoint_count, double duration_s) {
    if (waypoint_count < 2) throw std::invalid_argument("waypoint count must be at least 2");
    if (!(duration_s > 0.0)) throw std::invalid_argument("solve duration must be positive");
    std::lock_guard lock(mutex_);
    Stat& s = stats_[waypoint_count];
    ++s.count;
    s.mean += (duration_s - s.mean) / static_cast<double>(s.count);
  }

  /// Mean observed duration for the count (or power-law extrapolation), with
  /// no inflation applied.
  double raw_estimate(int waypoint_count) const {
    std::lock_guard lock(mutex_);
    return raw_estimate_locked(waypoint_count);
  }

  /// Reported duration estimate: raw estimate plus the configured inflation.
  double estimate(int waypoint_count) const {
    std::lock_guard lock(mutex_);
    return raw_estimate_locked(waypoint_count) + inflation_;
  }

  bool has_samples() const {
    std::lock_guard lock(mutex_);
    return !stats_.empty();
  }

  int sample_count(int waypoint_count) const {
    std::lock_guard lock(mutex_);
    const auto it = stats_.find(waypoint_count);
    return it == stats_.end() ? 0 : it->second.count;
  }

  void set_inflation(double seconds) {
    if (seconds < 0.0) throw std::invalid_argument("inflation must be non-negative");
    std::lock_guard lock(mutex_);
    inflation_ = seconds;
  }

  double inflation() const {
    std::lock_guard lock(mutex_);
    return inflation_;
  }

 private:
  struct Stat {
    int count = 0;
    double mean = 0.0;
  };

  double raw_estimate_locked(int waypoint_count) const {
    if (stats_.empty())
      throw std::logic_error("computation time estimator has no samples; seed it first");
    const auto exact = stats_.find(waypoint_count);
    if (exact != stats_.end()) return exact->second.mean;
    // Nearest observed count in log space, then power-law extrapolation.
    const double target = std::log(static_cast<double>(waypoint_count));
    const Stat* nearest = nullptr;
    int nearest_count = 0;
    double best = 0.0;
    for (const auto& [count, stat] : stats_) {
      const double d = std::abs(std::log(static_cast<double>(count)) - target);
      if (!nearest || d < best) {
        nearest = &stat;
        nearest_count = count;
        best = d;
      }
    }
    const double ratio = static_cast<double>(waypoint_count) / static_cast<double>(nearest_count);
    return nearest->mean * std::pow(ratio, kScalingExponent);
  }

  mutable std::mutex mutex_;
  std::map<int, Stat> stats_;
  double inflation_ = 0.0;
};

/// Convenience wrapper matching the estimator's update contract.
inline void record_solve(ComputationTimeEstimator& estimator, int waypoint_count,
                         double duration_s) {
  estimator.record(waypoint_count, duration_s);
}

}  // namespace dyntraj

#endif  // DYNTRAJ_TIME_ESTIMATOR_HPP_
