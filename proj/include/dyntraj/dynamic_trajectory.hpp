#ifndef DYNTRAJ_DYNAMIC_TRAJECTORY_HPP_
#define DYNTRAJ_DYNAMIC_TRAJECTORY_HPP_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dyntraj/gaussian_modifier.hpp"
#include "dyntraj/min_snap.hpp"
#include "dyntraj/piecewise_polynomial.hpp"
#include "dyntraj/reference_problem.hpp"
#include "dyntraj/time_estimator.hpp"
#include "dyntraj/vec3.hpp"
#include "dyntraj/waypoint.hpp"

namespace dyntraj {

/// Parameters of the security-zone policy and of trajectory stitching.
struct SecurityConfig {
  double safety_factor = 5.0;  // multiples of the solve-time estimate
  int stitch_count = 1;        // smoothing waypoints per swap (1 or 2 work best)
  double stitch_margin = 1.5;  // stitching window as a multiple of the estimate

  void require_valid() const {
    if (!(safety_factor >= 1.0) || stitch_count < 1 || !(stitch_margin >= 1.0))
      throw std::invalid_argument("invalid security configuration");
  }
};

/// Time window before the next waypoint inside which a full regeneration can
/// no longer be delivered safely.
inline double security_time(const ComputationTimeEstimator& estimator, int waypoint_count,
                            const SecurityConfig& config) {
  return config.safety_factor * estimator.estimate(waypoint_count);
}

/// An identified waypoint of the live trajectory. `time` is its traversal
/// time on the current composite trajectory. Stitch waypoints are internal
/// smoothing constraints introduced by swaps; they are not modification
/// targets.
struct DynamicWaypoint {
  std::int64_t id = 0;
  WaypointConstraint constraint;
  double time = 0.0;
  bool stitch = false;
};

/// Construction-time description of a waypoint (traversal time optional; when
/// all times are given they are used verbatim as knot times).
struct WaypointSpec {
  std::int64_t id = 0;
  WaypointConstraint constraint;
  std::optional<double> time;
};

struct ModificationOutcome {
  enum class Kind { kRegenerated, kLgmApplied, kRejectedTooLate };
  Kind kind = Kind::kRejectedTooLate;
  std::optional<GaussianModifier> modifier;       // set when kind == kLgmApplied
  std::optional<double> scheduled_swap_time;      // set for virtual-time regenerations
};

class WaypointPassed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TimingMode { kWallClock, kVirtualTime };

/// One stitching constraint sampled from the live composite trajectory.
struct StitchSample {
  WaypointConstraint constraint;
  double time = 0.0;
  bool clamped = false;  // sampled beyond the trajectory end
};

/// Everything needed to solve and swap in a regenerated base trajectory.
/// Future waypoints keep their traversal times from the live trajectory (the
/// old schedule flew those segments already; re-allocating each regeneration
/// would let the timeline creep); only the stitch block introduces new knots.
struct RegenerationPlan {
  double t_gen = 0.0;
  double t_offset = 0.0;
  int stitch_count = 1;
  bool clamped = false;
  std::vector<WaypointConstraint> constraints;  // stitches first, then future waypoints
  std::vector<double> knots;                    // knot times (absolute)
  std::vector<DynamicWaypoint> waypoints;       // records for the post-swap snapshot
  std::vector<std::pair<std::int64_t, double>> applied_updates;  // id, request stamp

  double stitch_window() const { return static_cast<double>(stitch_count) * t_offset; }
  int waypoint_count() const { return static_cast<int>(constraints.size()); }
};

struct SwapResult {
  bool swapped = false;
  std::uint64_t epoch = 0;
  double swap_time = 0.0;
  std::string reason;
};

/// The live composite trajectory F(t): a minimum-snap base plus stacked
/// Gaussian modifiers per waypoint, with swap bookkeeping.
///
/// Concurrency contract: any number of sampler threads may call evaluate() /
/// sample() concurrently; they never block on a regeneration. Modifier-role
/// calls (modify_waypoint, poll, swap_in) are serialized internally. New
/// trajectory states are published atomically as immutable snapshots.
class DynamicTrajectory {
 public:
  struct Options {
    DynamicsLimits limits{5.0, 5.0};
    SecurityConfig security;
    TimingMode mode = TimingMode::kVirtualTime;
    double inflation = 0.0;      // seconds added to reported solve times
    bool lgm_dispatch = true;    // false drops in-zone modifications (experiment baseline)
    // Position change below which a regeneration is not worth dispatching
    // immediately; sub-threshold updates accumulate and flush after roughly
    // two stitch windows. Keeps rapid tiny updates from re-stitching the
    // trajectory against its own output at high rate.
    double regeneration_deadband = 0.05;
    // Virtual-time solve model seed: one synthetic sample (count, seconds).
    int virtual_profile_count = kReferenceSolveProfile[0].first;
    double virtual_profile_time = kReferenceSolveProfile[0].second;
  };

  struct Sample {
    Vec3 position;
    Vec3 velocity;
    Vec3 acceleration;
    std::uint64_t epoch = 0;
    int modifier_count = 0;
  };

  DynamicTrajectory(const std::vector<WaypointSpec>& waypoints, Options options,
                    std::shared_ptr<ComputationTimeEstimator> estimator = nullptr)
      : options_(options),
        estimator_(estimator ? std::move(estimator) : std::make_shared<ComputationTimeEstimator>()) {
    options_.limits.require_valid();
    options_.security.require_valid();
    estimator_->set_inflation(options_.inflation);
    build_initial(waypoints);
  }

  ~DynamicTrajectory() { stop_worker(); }

  DynamicTrajectory(const DynamicTrajectory&) = delete;
  DynamicTrajectory& operator=(const DynamicTrajectory&) = delete;

  // ----- sampler role (lock-free with respect to regenerations) -----

  /// Composite evaluation F(t) = P(t) + sum of all modifiers; order 0..2.
  Vec3 evaluate(double t, int order = 0) const {
    if (order < 0 || order > 2)
      throw std::invalid_argument("composite evaluation supports orders 0..2");
    const std::shared_ptr<const Snapshot> snap = serving_snapshot(t);
    Vec3 value = snap->base.evaluate(t, order);
    for (const auto& stack : snap->modifiers) value += evaluate_stack(stack, t, order);
    return value;
  }

  Sample sample(double t) const {
    const std::shared_ptr<const Snapshot> snap = serving_snapshot(t);
    Sample s;
    s.position = snap->base.evaluate(t, 0);
    s.velocity = snap->base.evaluate(t, 1);
    s.acceleration = snap->base.evaluate(t, 2);
    for (const auto& stack : snap->modifiers) {
      s.modifier_count += static_cast<int>(stack.size());
      for (const GaussianModifier& m : stack) {
        s.position += m.evaluate(t, 0);
        s.velocity += m.evaluate(t, 1);
        s.acceleration += m.evaluate(t, 2);
      }
    }
    s.epoch = snap->epoch;
    return s;
  }

  double start_time() const { return current()->base.start_time(); }
  double end_time() const { return current()->base.end_time(); }
  std::uint64_t epoch() const { return current()->epoch; }

  int modifier_count() const {
    const auto snap = current();
    int n = 0;
    for (const auto& stack : snap->modifiers) n += static_cast<int>(stack.size());
    return n;
  }

  std::vector<DynamicWaypoint> waypoints() const { return current()->waypoints; }

  std::optional<DynamicWaypoint> find_waypoint(std::int64_t id) const {
    const auto snap = current();
    for (const DynamicWaypoint& wp : snap->waypoints)
      if (wp.id == id && !wp.stitch) return wp;
    return std::nullopt;
  }

  /// Base polynomial of the currently serving snapshot (no modifiers).
  PiecewisePolynomial base_polynomial() const { return current()->base; }

  /// True when the time to the next (non-stitch) waypoint is shorter than the
  /// security time for the current trajectory size.
  bool in_security_zone(double t_now) const {
    const auto snap = current();
    const DynamicWaypoint* next = next_waypoint(*snap, t_now);
    if (next == nullptr) return false;
    const double window =
        security_time(*estimator_, static_cast<int>(snap->waypoints.size()), options_.security);
    return (next->time - t_now) < window;
  }

  /// Security time for the current trajectory size.
  double security_window() const {
    const auto snap = current();
    return security_time(*estimator_, static_cast<int>(snap->waypoints.size()), options_.security);
  }

  const Options& options() const { return options_; }
  const std::shared_ptr<ComputationTimeEstimator>& estimator() const { return estimator_; }

  // ----- modifier role -----

  /// Requests that the waypoint pass through new_position. Outside the
  /// security zone (or for any waypoint beyond the next one) a background
  /// regeneration is dispatched; inside it, a Gaussian modifier is stacked
  /// onto the waypoint immediately. Requests arriving exactly at the
  /// waypoint's traversal time are rejected.
  ModificationOutcome modify_waypoint(std::int64_t id, const Vec3& new_position, double t_now) {
    if (!new_position.is_finite()) throw std::invalid_argument("waypoint position must be finite");
    std::unique_lock lock(modifier_mutex_);
    const auto snap = current();
    const DynamicWaypoint* target = nullptr;
    for (const DynamicWaypoint& wp : snap->waypoints)
      if (!wp.stitch && wp.id == id) target = &wp;
    if (target == nullptr) throw std::invalid_argument("unknown waypoint id");
    if (target->time < t_now) throw WaypointPassed("waypoint already passed");
    if (target->time == t_now) return {ModificationOutcome::Kind::kRejectedTooLate, {}, {}};

    const DynamicWaypoint* next = next_waypoint(*snap, t_now);
    const bool zone = in_security_zone(t_now);
    if (next != nullptr && next->id == id && zone) {
      pending_updates_.erase(id);
      if (!options_.lgm_dispatch) return {ModificationOutcome::Kind::kRejectedTooLate, {}, {}};
      // A waypoint crossed inside an in-flight regeneration's stitch window
      // cannot be deformed anymore: the imminent swap replicates the old
      // composite only at the stitch samples and would smear the change.
      if (inflight_window_end_ && target->time <= *inflight_window_end_)
        return {ModificationOutcome::Kind::kRejectedTooLate, {}, {}};
      const GaussianModifier m =
          make_modifier(evaluate(target->time, 0), new_position, target->time, t_now, id);
      publish_with_modifier(snap, m);
      lgm_requests_[id] = PendingUpdate{new_position, t_now};
      return {ModificationOutcome::Kind::kLgmApplied, m, {}};
    }

    pending_updates_[id] = PendingUpdate{new_position, t_now};
    ModificationOutcome outcome{ModificationOutcome::Kind::kRegenerated, {}, {}};
    if (!regeneration_in_flight_) {
      if (!pending_exceeds_deadband_locked()) {
        if (!deferred_dispatch_time_)
          deferred_dispatch_time_ = t_now + 2.0 * estimated_stitch_window_locked();
        return outcome;
      }
      const DispatchResult dispatched = try_dispatch_locked(t_now);
      if (dispatched.exhausted) {
        // Nothing regenerable remains ahead of the stitch window.
        pending_updates_.erase(id);
        return {ModificationOutcome::Kind::kRejectedTooLate, {}, {}};
      }
      outcome.scheduled_swap_time = dispatched.scheduled_swap_time;
    }
    return outcome;
  }

  /// Drives time-based progress: commits a due virtual-time swap and launches
  /// any follow-up regeneration for updates that arrived during the solve.
  /// Wall-clock mode commits from the worker thread, so this is cheap there.
  void poll(double t_now) {
    std::unique_lock lock(modifier_mutex_);
    if (!regeneration_in_flight_ && deferred_dispatch_time_ && t_now >= *deferred_dispatch_time_) {
      deferred_dispatch_time_.reset();
      if (!pending_updates_.empty()) try_dispatch_locked(t_now);
    }
    if (options_.mode != TimingMode::kVirtualTime) return;
    if (!pending_commit_ || t_now < pending_commit_->swap_time) return;
    PendingCommit commit = std::move(*pending_commit_);
    pending_commit_.reset();
    regeneration_in_flight_ = false;
    inflight_window_end_.reset();
    swap_in_locked(commit.plan, std::move(commit.base), commit.swap_time);
    prune_pending_locked(commit.swap_time);
    schedule_followup_locked(t_now);
  }

  /// Blocks until no regeneration is in flight (test/shutdown helper).
  void wait_idle() {
    std::unique_lock lock(modifier_mutex_);
    idle_cv_.wait(lock, [&] { return !regeneration_in_flight_; });
  }

  // ----- regeneration primitives (also exercised directly by tests) -----

  /// Samples the stitching constraints: position, velocity and acceleration
  /// of the live composite at t_gen + i * t_offset for i = 0..stitch_count,
  /// with t_offset = stitch_margin * estimate(waypoint_count) / stitch_count.
  std::vector<StitchSample> stitch_constraints(double t_gen, int waypoint_count) const {
    const double estimate = estimator_->estimate(waypoint_count);
    const double t_offset =
        options_.security.stitch_margin * estimate / static_cast<double>(options_.security.stitch_count);
    return stitch_constraints_with_offset(t_gen, t_offset);
  }

  /// Builds the full regeneration plan at t_gen, applying pending updates.
  RegenerationPlan plan_regeneration(double t_gen) {
    std::unique_lock lock(modifier_mutex_);
    return plan_regeneration_locked(t_gen);
  }

  /// Solves the plan's base polynomial in one pass. Regenerated bases are not
  /// re-verified against the speed/acceleration limits: their stitch boundary
  /// states are sampled from the live composite, whose stacked modifiers are
  /// exempt from the limits, so a hard post-check is not satisfiable there.
  /// The re-timed tail relies on the conservative allocation rule instead.
  PiecewisePolynomial solve_plan(const RegenerationPlan& plan) const {
    return solve_min_snap(plan.constraints, plan.knots);
  }

  /// Atomically replaces the serving trajectory from t_swap onward. Aborted
  /// (old trajectory retained) when t_swap falls beyond the stitch window,
  /// i.e. the solve outlived the region where old and new coincide.
  SwapResult swap_in(const RegenerationPlan& plan, PiecewisePolynomial new_base, double t_swap) {
    std::unique_lock lock(modifier_mutex_);
    return swap_in_locked(plan, std::move(new_base), t_swap);
  }

 private:
  struct Snapshot {
    std::uint64_t epoch = 0;
    double swap_time = 0.0;  // serves t >= swap_time; older samples fall back
    std::shared_ptr<const Snapshot> previous;
    PiecewisePolynomial base;
    std::vector<DynamicWaypoint> waypoints;
    std::vector<std::vector<GaussianModifier>> modifiers;  // parallel to waypoints
  };

  struct PendingUpdate {
    Vec3 position;
    double stamp = 0.0;
  };

  struct PendingCommit {
    RegenerationPlan plan;
    PiecewisePolynomial base;
    double swap_time = 0.0;
  };

  // --- snapshot plumbing ---

  std::shared_ptr<const Snapshot> current() const { return std::atomic_load(&snapshot_); }

  std::shared_ptr<const Snapshot> serving_snapshot(double t) const {
    std::shared_ptr<const Snapshot> snap = std::atomic_load(&snapshot_);
    while (t < snap->swap_time && snap->previous) snap = snap->previous;
    return snap;
  }

  void publish(std::shared_ptr<const Snapshot> snap) { std::atomic_store(&snapshot_, std::move(snap)); }

  static const DynamicWaypoint* next_waypoint(const Snapshot& snap, double t_now) {
    for (const DynamicWaypoint& wp : snap.waypoints)
      if (!wp.stitch && wp.time > t_now) return &wp;
    return nullptr;
  }

  void publish_with_modifier(const std::shared_ptr<const Snapshot>& snap,
                             const GaussianModifier& m) {
    auto next = std::make_shared<Snapshot>(*snap);
    for (std::size_t i = 0; i < next->waypoints.size(); ++i) {
      if (!next->waypoints[i].stitch && next->waypoints[i].id == m.waypoint_id) {
        next->modifiers[i].push_back(m);
        break;
      }
    }
    publish(std::move(next));
  }

  // --- construction ---

  void build_initial(const std::vector<WaypointSpec>& specs) {
    if (specs.size() < 2)
      throw std::invalid_argument("a dynamic trajectory requires at least two waypoints");
    std::vector<WaypointConstraint> constraints;
    constraints.reserve(specs.size());
    bool all_timed = true;
    std::vector<double> knots;
    for (const WaypointSpec& spec : specs) {
      constraints.push_back(spec.constraint);
      if (spec.time)
        knots.push_back(*spec.time);
      else
        all_timed = false;
    }

    seed_estimator_if_empty();

    PiecewisePolynomial base;
    const int n = static_cast<int>(specs.size());
    if (options_.mode == TimingMode::kWallClock) {
      const auto t0 = std::chrono::steady_clock::now();
      base = all_timed ? solve_min_snap(constraints, knots)
                       : generate_min_snap(constraints, options_.limits).trajectory;
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      estimator_->record(n, std::max(elapsed, 1e-9));
    } else {
      base = all_timed ? solve_min_snap(constraints, knots)
                       : generate_min_snap(constraints, options_.limits).trajectory;
      estimator_->record(n, estimator_->raw_estimate(n));
    }

    auto snap = std::make_shared<Snapshot>();
    snap->epoch = 0;
    snap->swap_time = base.start_time();
    snap->base = base;
    snap->waypoints.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
      snap->waypoints.push_back({specs[i].id, specs[i].constraint, base.knots()[i], false});
    snap->modifiers.assign(specs.size(), {});
    publish(std::move(snap));
  }

  void seed_estimator_if_empty() {
    if (estimator_->has_samples()) return;
    if (options_.mode == TimingMode::kVirtualTime) {
      estimator_->record(options_.virtual_profile_count, options_.virtual_profile_time);
      return;
    }
    // Cold start in wall-clock mode: one throwaway canonical solve.
    const auto waypoints = make_reference_waypoints(options_.virtual_profile_count);
    const auto t0 = std::chrono::steady_clock::now();
    generate_min_snap(waypoints, reference_limits());
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    estimator_->record(options_.virtual_profile_count, std::max(elapsed, 1e-9));
  }

  // --- regeneration pipeline (modifier mutex held) ---

  /// Stitch sampling: the live composite's position, velocity and
  /// acceleration, except that modifiers already spent within the stitch
  /// window (peak plus 3.5 sigma before its end) are skipped. Those die
  /// before the new base can take over, and their transient derivatives are
  /// huge relative to their value.
  Vec3 stitch_sample_value(const Snapshot& snap, double t, int order, double window_end) const {
    Vec3 value = snap.base.evaluate(t, order);
    for (const auto& stack : snap.modifiers)
      for (const GaussianModifier& m : stack)
        if (m.center + kWidthRuleSigmas * m.width > window_end) value += m.evaluate(t, order);
    return value;
  }

  std::vector<StitchSample> stitch_constraints_with_offset(double t_gen, double t_offset) const {
    const auto snap = current();
    const double window_end = t_gen + options_.security.stitch_count * t_offset;
    std::vector<StitchSample> out;
    const double horizon = snap->base.end_time();
    for (int i = 0; i <= options_.security.stitch_count; ++i) {
      const double t = t_gen + static_cast<double>(i) * t_offset;
      StitchSample s;
      s.time = t;
      s.clamped = t > horizon;
      s.constraint = WaypointConstraint(stitch_sample_value(*snap, t, 0, window_end),
                                        stitch_sample_value(*snap, t, 1, window_end),
                                        stitch_sample_value(*snap, t, 2, window_end));
      out.push_back(s);
    }
    return out;
  }

  RegenerationPlan plan_regeneration_locked(double t_gen) {
    const auto snap = current();
    const int stitch_count = options_.security.stitch_count;

    // Future non-stitch waypoints; old stitch constraints are baked into the
    // composite we re-sample, so they are not carried over.
    std::vector<const DynamicWaypoint*> future;
    for (const DynamicWaypoint& wp : snap->waypoints)
      if (!wp.stitch && wp.time > t_gen) future.push_back(&wp);

    // Waypoints crossed during the stitch window stay on the old trajectory;
    // the window length depends mildly on the count, so settle it in two
    // passes (the estimate is monotone in the count, which keeps the
    // exclusion conservative).
    const auto window_for = [&](std::size_t future_count) {
      const int n = stitch_count + 1 + static_cast<int>(future_count);
      return options_.security.stitch_margin * estimator_->estimate(n);
    };
    const double window_a = window_for(future.size());
    std::erase_if(future, [&](const DynamicWaypoint* wp) { return wp->time <= t_gen + window_a; });

    RegenerationPlan plan;
    plan.t_gen = t_gen;
    plan.stitch_count = stitch_count;
    plan.t_offset = window_for(future.size()) / static_cast<double>(stitch_count);

    const auto stitches = stitch_constraints_with_offset(t_gen, plan.t_offset);
    for (const StitchSample& s : stitches) {
      plan.clamped = plan.clamped || s.clamped;
      plan.constraints.push_back(s.constraint);
      plan.knots.push_back(s.time);
      plan.waypoints.push_back({next_stitch_id_--, s.constraint, s.time, true});
    }

    for (const DynamicWaypoint* wp : future) {
      WaypointConstraint record = wp->constraint;
      // The new base passes through the waypoint's current effective
      // position (composite, so prior modifiers survive the swap) unless a
      // pending update supersedes it.
      record.position = evaluate(wp->time, 0);
      const auto pending = pending_updates_.find(wp->id);
      if (pending != pending_updates_.end()) {
        record.position = pending->second.position;
        plan.applied_updates.emplace_back(wp->id, pending->second.stamp);
      }
      plan.constraints.push_back(record);
      plan.knots.push_back(wp->time);
      plan.waypoints.push_back({wp->id, record, wp->time, false});
    }
    return plan;
  }

  SwapResult swap_in_locked(const RegenerationPlan& plan, PiecewisePolynomial new_base,
                            double t_swap) {
    const double window = plan.stitch_window();
    if (t_swap - plan.t_gen > window * (1.0 + 1e-9)) {
      return {false, current()->epoch, t_swap,
              "solve outlived the stitch window; swap aborted, old trajectory retained"};
    }
    const auto old_snap = current();
    auto snap = std::make_shared<Snapshot>();
    snap->epoch = old_snap->epoch + 1;
    snap->swap_time = t_swap;
    // History is kept one swap deep: enough for a forward-moving sampler to
    // cross the boundary, without growing a chain.
    auto prev = std::make_shared<Snapshot>(*old_snap);
    prev->previous.reset();
    snap->previous = std::move(prev);
    snap->waypoints = plan.waypoints;
    for (std::size_t i = 0; i < snap->waypoints.size(); ++i)
      snap->waypoints[i].time = new_base.knots()[i];
    snap->modifiers.assign(snap->waypoints.size(), {});
    snap->base = std::move(new_base);
    publish(std::move(snap));

    for (const auto& [id, stamp] : plan.applied_updates) {
      const auto it = pending_updates_.find(id);
      if (it != pending_updates_.end() && it->second.stamp == stamp) pending_updates_.erase(it);
    }
    carry_forward_lgm_requests_locked(plan.t_gen, t_swap);
    return {true, old_snap->epoch + 1, t_swap, ""};
  }

  /// A swap discards stacked modifiers: their effect near the swap is baked
  /// into the stitch constraints and the new base interpolates the waypoints'
  /// effective positions. Requests honored as modifiers *while the solve was
  /// running* are not in the new base, though; re-stack those on the new
  /// snapshot. The original request time is kept as the modifier's anchor so
  /// the re-stacked deformation reproduces the discarded one's partial rise
  /// at the swap instant, keeping the handover step small.
  void carry_forward_lgm_requests_locked(double t_gen, double t_swap) {
    if (!options_.lgm_dispatch) return;
#ifdef DYNTRAJ_DEBUG_PLAN
    if (getenv("DYNTRAJ_NO_CARRY")) return;
#endif
    const auto snap = current();
    for (const DynamicWaypoint& wp : snap->waypoints) {
      if (wp.stitch || wp.time <= t_swap) continue;
      const auto it = lgm_requests_.find(wp.id);
      if (it == lgm_requests_.end() || it->second.stamp <= t_gen) continue;
      if (it->second.stamp == wp.time) continue;
      const Vec3 effective = evaluate(wp.time, 0);
      if ((effective - it->second.position).norm() < 1e-12) continue;
      publish_with_modifier(
          current(),
          make_modifier(effective, it->second.position, wp.time, it->second.stamp, wp.id));
    }
  }

  void prune_pending_locked(double t_now) {
    const auto snap = current();
    const auto passed = [&](const auto& entry) {
      for (const DynamicWaypoint& wp : snap->waypoints)
        if (!wp.stitch && wp.id == entry.first) return wp.time <= t_now;
      return true;  // waypoint no longer exists
    };
    std::erase_if(pending_updates_, passed);
    std::erase_if(lgm_requests_, passed);
  }

  struct DispatchResult {
    bool exhausted = false;  // nothing regenerable remains
    std::optional<double> scheduled_swap_time;
  };

  double estimated_stitch_window_locked() const {
    const auto snap = current();
    return options_.security.stitch_margin *
           estimator_->estimate(static_cast<int>(snap->waypoints.size()));
  }

  /// True when some pending update moves its waypoint far enough from the
  /// live trajectory to justify an immediate regeneration.
  bool pending_exceeds_deadband_locked() const {
    const auto snap = current();
    for (const DynamicWaypoint& wp : snap->waypoints) {
      if (wp.stitch) continue;
      const auto it = pending_updates_.find(wp.id);
      if (it == pending_updates_.end()) continue;
      if ((it->second.position - evaluate(wp.time, 0)).norm() >= options_.regeneration_deadband)
        return true;
    }
    return false;
  }

  /// After a commit: dispatch again right away when the remaining updates
  /// are significant, otherwise let them age until a deferred flush.
  void schedule_followup_locked(double t_now) {
    if (pending_updates_.empty()) return;
    if (pending_exceeds_deadband_locked()) {
      try_dispatch_locked(t_now);
      return;
    }
    if (!deferred_dispatch_time_)
      deferred_dispatch_time_ = t_now + 2.0 * estimated_stitch_window_locked();
  }

  /// Starts a regeneration at t_gen, unless the next waypoint crossing is
  /// imminent. Two reasons to wait: stitch samples cannot reproduce the old
  /// trajectory's detour through a waypoint inside (or right at the edge of)
  /// the sampling window, and while the vehicle is inside the security zone
  /// the next waypoint's freshly stacked modifiers put violent transients
  /// into the samples. Such dispatches are deferred until just past the
  /// crossing and picked up by poll(); with large inflation the deferral
  /// persists and the trajectory runs on modifiers alone, which is exactly
  /// the regime the security zone describes.
  DispatchResult try_dispatch_locked(double t_gen) {
    constexpr double kDeferralMargin = 1e-3;
    constexpr double kMinStitchGap = 0.15;  // first knot past the window, seconds
    const auto snap = current();
    // Upper bound of any window a plan could compute: the plan's waypoint
    // count never exceeds the snapshot's plus the stitch block, and the
    // estimate is monotone in the count.
    const int count = static_cast<int>(snap->waypoints.size());
    const double estimate =
        estimator_->estimate(count + options_.security.stitch_count + 1);
    const double window = options_.security.stitch_margin * estimate;
    const double zone = options_.security.safety_factor * estimate;
    const double horizon = std::max(window + kMinStitchGap, zone);
    for (const DynamicWaypoint& wp : snap->waypoints) {
      if (wp.stitch || wp.time <= t_gen) continue;
      if (wp.time <= t_gen + horizon) {
        deferred_dispatch_time_ = wp.time + kDeferralMargin;
        return {false, std::nullopt};
      }
      break;
    }
    const std::optional<double> scheduled = dispatch_locked(t_gen);
    if (!scheduled) return {true, std::nullopt};
    return {false, scheduled};
  }

  /// Starts a regeneration at t_gen. Returns the scheduled swap time in
  /// virtual mode, or +inf (unknown yet) in wall-clock mode; nullopt when no
  /// future waypoint remains beyond the stitch window.
  std::optional<double> dispatch_locked(double t_gen) {
    RegenerationPlan plan = plan_regeneration_locked(t_gen);
    if (plan.constraints.size() < static_cast<std::size_t>(plan.stitch_count) + 2)
      return std::nullopt;

    regeneration_in_flight_ = true;
    inflight_window_end_ = plan.t_gen + plan.stitch_window();
    if (options_.mode == TimingMode::kVirtualTime) {
      PiecewisePolynomial base = solve_plan(plan);
#ifdef DYNTRAJ_DEBUG_PLAN
      {
        double peak = 0.0;
        for (double t = base.start_time(); t <= base.end_time(); t += 0.01)
          peak = std::max(peak, base.evaluate(t, 1).norm());
        if (peak > 3.0 * options_.limits.max_speed) {
          fprintf(stderr, "BAD PLAN t_gen=%.4f t_offset=%.4f peak=%.2f\n", plan.t_gen,
                  plan.t_offset, peak);
          for (std::size_t i = 0; i < plan.constraints.size(); ++i) {
            const auto& c = plan.constraints[i];
            fprintf(stderr, "  knot %.4f pos(%.3f %.3f %.3f)", plan.knots[i], c.position.x,
                    c.position.y, c.position.z);
            if (c.velocity)
              fprintf(stderr, " vel(%.3f %.3f %.3f)", c.velocity->x, c.velocity->y, c.velocity->z);
            if (c.acceleration)
              fprintf(stderr, " acc(%.3f %.3f %.3f)", c.acceleration->x, c.acceleration->y,
                      c.acceleration->z);
            fprintf(stderr, "\n");
          }
        }
      }
#endif
      const int n = plan.waypoint_count();
      const double raw = estimator_->raw_estimate(n);
      estimator_->record(n, raw);
      const double swap_time = t_gen + raw + options_.inflation;
      pending_commit_ = PendingCommit{std::move(plan), std::move(base), swap_time};
      return swap_time;
    }
    queue_wall_job(std::move(plan));
    return std::numeric_limits<double>::infinity();
  }

  // --- wall-clock worker ---

  void queue_wall_job(RegenerationPlan plan) {
    if (!worker_.joinable()) {
      worker_ = std::jthread([this](std::stop_token st) { worker_loop(st); });
    }
    wall_job_ = std::move(plan);
    worker_cv_.notify_all();
  }

  void worker_loop(std::stop_token stop) {
    std::unique_lock lock(modifier_mutex_);
    while (true) {
      worker_cv_.wait(lock, [&] { return stop.stop_requested() || wall_job_.has_value(); });
      if (stop.stop_requested()) return;
      RegenerationPlan plan = std::move(*wall_job_);
      wall_job_.reset();
      lock.unlock();

      const auto t0 = std::chrono::steady_clock::now();
      PiecewisePolynomial base = solve_plan(plan);
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      lock.lock();
      estimator_->record(plan.waypoint_count(), std::max(elapsed, 1e-9));
      const double t_swap = plan.t_gen + elapsed;
      const SwapResult result = swap_in_locked(plan, std::move(base), t_swap);
      if (result.swapped) prune_pending_locked(t_swap);
      regeneration_in_flight_ = false;
      inflight_window_end_.reset();
      schedule_followup_locked(t_swap);
      if (regeneration_in_flight_) continue;  // follow-up job queued
      idle_cv_.notify_all();
    }
  }

  void stop_worker() {
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_cv_.notify_all();
      worker_.join();
    }
  }

  Options options_;
  std::shared_ptr<ComputationTimeEstimator> estimator_;
  std::shared_ptr<const Snapshot> snapshot_;

  mutable std::mutex modifier_mutex_;
  std::map<std::int64_t, PendingUpdate> pending_updates_;
  std::map<std::int64_t, PendingUpdate> lgm_requests_;  // latest modifier-honored request per id
  std::optional<double> inflight_window_end_;           // stitch window of the running solve
  std::optional<double> deferred_dispatch_time_;        // dispatch postponed past a crossing
  bool regeneration_in_flight_ = false;
  std::optional<PendingCommit> pending_commit_;  // virtual-time mode
  std::int64_t next_stitch_id_ = -1;

  std::jthread worker_;  // wall-clock mode only
  std::condition_variable_any worker_cv_;
  std::condition_variable_any idle_cv_;
  std::optional<RegenerationPlan> wall_job_;
};

/// Stitching constraints sampled from the live composite (free-function form).
inline std::vector<StitchSample> make_swap_waypoints(const DynamicTrajectory& traj, double t_gen,
                                                     int waypoint_count) {
  return traj.stitch_constraints(t_gen, waypoint_count);
}

}  // namespace dyntraj

#endif  // DYNTRAJ_DYNAMIC_TRAJECTORY_HPP_
