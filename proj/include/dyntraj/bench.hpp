#ifndef DYNTRAJ_BENCH_HPP_
#define DYNTRAJ_BENCH_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dyntraj/gaussian_modifier.hpp"
#include "dyntraj/min_snap.hpp"
#include "dyntraj/reference_problem.hpp"

namespace dyntraj::bench {

template <typename T>
inline void do_not_optimize(const T& value) {
  asm volatile("" : : "g"(&value) : "memory");
}

struct TimingStats {
  double mean_s = 0.0;
  double stddev_s = 0.0;
  int repetitions = 0;
};

/// Times `fn` over `repetitions` runs after `warmup` discarded ones. When a
/// single run is too short for the clock, `batch` inner iterations are timed
/// together and averaged.
template <typename Fn>
TimingStats time_repeated(Fn&& fn, int repetitions, int warmup, int batch = 1) {
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i)
    for (int b = 0; b < batch; ++b) fn();

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = clock::now();
    for (int b = 0; b < batch; ++b) fn();
    const auto t1 = clock::now();
    samples.push_back(std::chrono::duration<double>(t1 - t0).count() / batch);
  }

  TimingStats stats;
  stats.repetitions = repetitions;
  for (const double s : samples) stats.mean_s += s;
  stats.mean_s /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const double s : samples) var += (s - stats.mean_s) * (s - stats.mean_s);
  stats.stddev_s = samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0;
  return stats;
}

/// Mean time of one full base-trajectory generation (time allocation, solve,
/// feasibility verification) for the canonical problem of the given size.
inline TimingStats time_base_generation(int waypoint_count, int repetitions, int warmup) {
  const auto waypoints = make_reference_waypoints(waypoint_count);
  const DynamicsLimits limits = reference_limits();
  return time_repeated(
      [&] {
        const GeneratedTrajectory result = generate_min_snap(waypoints, limits);
        do_not_optimize(result.trajectory);
      },
      repetitions, warmup);
}

/// Mean time to construct `modifier_count` stacked modifiers and evaluate
/// their sum once, mirroring how the composite trajectory consumes them.
inline TimingStats time_modifier_stack(int modifier_count, int repetitions, int warmup,
                                       std::uint64_t seed = 12345) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> center_dist(2.0, 10.0);
  std::uniform_real_distribution<double> offset_dist(0.2, 1.5);
  std::uniform_real_distribution<double> amp_dist(-1.0, 1.0);

  struct Request {
    Vec3 current, target;
    double waypoint_time, request_time;
  };
  std::vector<Request> requests(static_cast<std::size_t>(modifier_count));
  for (Request& r : requests) {
    r.current = Vec3{amp_dist(rng), amp_dist(rng), amp_dist(rng)};
    r.target = Vec3{amp_dist(rng), amp_dist(rng), amp_dist(rng)};
    r.waypoint_time = center_dist(rng);
    r.request_time = r.waypoint_time - offset_dist(rng);
  }
  const double query = center_dist(rng);

  std::vector<GaussianModifier> stack;
  stack.reserve(requests.size());
  // Batch so each timed sample spans at least a few microseconds.
  const int batch = std::max(1, 20000 / modifier_count);
  return time_repeated(
      [&] {
        stack.clear();
        std::int64_t id = 0;
        for (const Request& r : requests)
          stack.push_back(make_modifier(r.current, r.target, r.waypoint_time, r.request_time, id++));
        const Vec3 value = evaluate_stack(stack, query, 0);
        do_not_optimize(value);
      },
      repetitions, warmup, batch);
}

}  // namespace dyntraj::bench

#endif  // DYNTRAJ_BENCH_HPP_
