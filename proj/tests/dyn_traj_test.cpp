#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <memory>
#include <thread>
#include <vector>

#include "dyntraj/dynamic_trajectory.hpp"
#include "dyntraj/min_snap.hpp"

namespace dyntraj {
namespace {

std::vector<WaypointSpec> five_waypoints() {
  return {
      {0, WaypointConstraint({0.0, 0.0, 1.0}), {}},
      {1, WaypointConstraint({4.0, 2.0, 1.5}), {}},
      {2, WaypointConstraint({8.0, -1.0, 2.0}), {}},
      {3, WaypointConstraint({12.0, 2.5, 1.2}), {}},
      {4, WaypointConstraint({16.0, 0.0, 1.0}), {}},
  };
}

DynamicTrajectory::Options virtual_options(double inflation = 0.0) {
  DynamicTrajectory::Options options;
  options.limits = DynamicsLimits{5.0, 5.0};
  options.mode = TimingMode::kVirtualTime;
  options.inflation = inflation;
  return options;
}

TEST(BuildInitial, TwoRestWaypointsMatchBaseSolver) {
  std::vector<WaypointSpec> specs{{0, WaypointConstraint({0, 0, 0}), {}},
                                  {1, WaypointConstraint({1, 0, 0}), {}}};
  DynamicTrajectory traj(specs, virtual_options());

  const auto oracle = generate_min_snap({WaypointConstraint({0, 0, 0}),
                                         WaypointConstraint({1, 0, 0})},
                                        virtual_options().limits);
  for (double t = 0.0; t <= traj.end_time(); t += traj.end_time() / 17.0)
    EXPECT_EQ(traj.evaluate(t, 0), oracle.trajectory.evaluate(t, 0));

  // Symmetric rest-to-rest interpolant passes midway at half time.
  const double mid = 0.5 * (traj.start_time() + traj.end_time());
  EXPECT_NEAR(traj.evaluate(mid, 0).x, 0.5, 1e-9);
}

TEST(BuildInitial, InterpolatesAllWaypoints) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  for (const DynamicWaypoint& wp : traj.waypoints())
    EXPECT_LE((traj.evaluate(wp.time, 0) - wp.constraint.position).norm(), 1e-6);
}

TEST(BuildInitial, SeedsEstimatorWithModeledDuration) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  const auto& estimator = *traj.estimator();
  EXPECT_EQ(estimator.sample_count(5), 1);
  const double modeled = kReferenceSolveProfile[0].second *
                         std::pow(5.0 / 6.0, ComputationTimeEstimator::kScalingExponent);
  EXPECT_NEAR(estimator.estimate(5), modeled, 1e-12);
}

TEST(BuildInitial, RequiresTwoWaypoints) {
  std::vector<WaypointSpec> specs{{0, WaypointConstraint({0, 0, 0}), {}}};
  EXPECT_THROW(DynamicTrajectory(specs, virtual_options()), std::invalid_argument);
}

TEST(EvalDyn, NoModifiersEqualsBasePolynomial) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  const PiecewisePolynomial base = traj.base_polynomial();
  for (double t = traj.start_time(); t <= traj.end_time(); t += 0.31)
    for (int order = 0; order <= 2; ++order)
      EXPECT_EQ(traj.evaluate(t, order), base.evaluate(t, order));
}

TEST(EvalDyn, RejectsOrdersAboveTwo) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  EXPECT_THROW(traj.evaluate(1.0, 3), std::invalid_argument);
}

TEST(EvalDyn, ModifierPeakAddsAmplitude) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.3));
  const auto wp = *traj.find_waypoint(2);
  const double t_now = wp.time - 0.4 * traj.security_window();
  ASSERT_TRUE(traj.in_security_zone(t_now));
  const Vec3 base_at_wp = traj.evaluate(wp.time, 0);

  const Vec3 target = wp.constraint.position + Vec3{0.4, -0.2, 0.1};
  const auto outcome = traj.modify_waypoint(2, target, t_now);
  ASSERT_EQ(outcome.kind, ModificationOutcome::Kind::kLgmApplied);
  const Vec3 expected = base_at_wp + outcome.modifier->amplitude;
  EXPECT_LE((traj.evaluate(wp.time, 0) - expected).norm(), 1e-12);
  EXPECT_LE((traj.evaluate(wp.time, 0) - target).norm(), 1e-12);
}

TEST(EvalDyn, StackedModifiersMatchBruteForceSum) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(2.0));
  const PiecewisePolynomial base = traj.base_polynomial();

  // Stack 64 modifiers on the next waypoint through the in-zone path (the
  // inflated estimate keeps the whole leg inside the security zone).
  std::vector<GaussianModifier> inserted;
  const double t_w = traj.find_waypoint(1)->time;
  for (int i = 0; i < 64; ++i) {
    const double t_now = 0.05 + (t_w - 0.2) * i / 64.0;
    ASSERT_TRUE(traj.in_security_zone(t_now));
    const Vec3 target{4.0 + 0.01 * (i + 1), 2.0 + 0.02 * (i + 1), 1.5};
    const auto outcome = traj.modify_waypoint(1, target, t_now);
    ASSERT_EQ(outcome.kind, ModificationOutcome::Kind::kLgmApplied) << "i = " << i;
    inserted.push_back(*outcome.modifier);
  }
  ASSERT_EQ(traj.modifier_count(), 64);

  for (double t : {0.5, 1.0, t_w, t_w + 0.3}) {
    for (int order = 0; order <= 2; ++order) {
      Vec3 expected = base.evaluate(t, order);
      for (const GaussianModifier& m : inserted) expected += m.evaluate(t, order);
      const Vec3 actual = traj.evaluate(t, order);
      EXPECT_LE((actual - expected).norm(), 1e-12 * std::max(1.0, expected.norm()));
    }
  }
}

TEST(SecurityTime, ScalesTheEstimate) {
  ComputationTimeEstimator estimator;
  estimator.record(6, 0.01371);
  SecurityConfig config;
  EXPECT_DOUBLE_EQ(security_time(estimator, 6, config), 5.0 * 0.01371);  // 68.55 ms

  estimator.record(9, 0.1);
  EXPECT_DOUBLE_EQ(security_time(estimator, 9, config), 0.5);

  config.safety_factor = 1.0;
  EXPECT_DOUBLE_EQ(security_time(estimator, 9, config), 0.1);
}

TEST(InSecurityZone, BoundaryCases) {
  std::vector<WaypointSpec> specs{{0, WaypointConstraint({0, 0, 0}), {}},
                                  {1, WaypointConstraint({10, 0, 0}), {}}};
  DynamicTrajectory traj(specs, virtual_options());
  const double window = traj.security_window();
  const double t_w = traj.find_waypoint(1)->time;
  ASSERT_GT(t_w, 2.0 * window);

  EXPECT_FALSE(traj.in_security_zone(t_w - 2.0 * window));
  EXPECT_TRUE(traj.in_security_zone(t_w - 0.5 * window));
  EXPECT_FALSE(traj.in_security_zone(t_w + 1e-9));  // no next waypoint
}

TEST(MakeSwapWaypoints, FirstSampleIsTheCompositeState) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.3));
  // Bend the composite first so the test covers modifiers, not just the base.
  const auto wp = *traj.find_waypoint(1);
  traj.modify_waypoint(1, wp.constraint.position + Vec3{0.3, 0.0, 0.0},
                       wp.time - 0.3 * traj.security_window());

  const double t_gen = 0.7;
  const auto samples = make_swap_waypoints(traj, t_gen, 5);
  ASSERT_EQ(samples.size(), 2u);  // stitch_count + 1
  EXPECT_EQ(samples[0].constraint.position, traj.evaluate(t_gen, 0));
  EXPECT_EQ(*samples[0].constraint.velocity, traj.evaluate(t_gen, 1));
  EXPECT_EQ(*samples[0].constraint.acceleration, traj.evaluate(t_gen, 2));
  EXPECT_FALSE(samples[0].clamped);
}

TEST(MakeSwapWaypoints, OffsetArithmetic) {
  auto estimator = std::make_shared<ComputationTimeEstimator>();
  estimator->record(7, 0.1);

  DynamicTrajectory::Options options = virtual_options();
  DynamicTrajectory traj(five_waypoints(), options, estimator);
  const auto one = traj.stitch_constraints(1.0, 7);
  ASSERT_EQ(one.size(), 2u);
  EXPECT_NEAR(one[1].time - one[0].time, 0.15, 1e-12);  // 1.5 * 0.1 / 1

  options.security.stitch_count = 2;
  DynamicTrajectory traj2(five_waypoints(), options, estimator);
  const auto two = traj2.stitch_constraints(1.0, 7);
  ASSERT_EQ(two.size(), 3u);
  EXPECT_NEAR(two[1].time - two[0].time, 0.075, 1e-12);
  EXPECT_NEAR(two[2].time - two[1].time, 0.075, 1e-12);
}

TEST(MakeSwapWaypoints, SamplesBeyondTheEndAreClampedAndFlagged) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(1.0));
  const double t_gen = traj.end_time() - 0.1;
  const auto samples = traj.stitch_constraints(t_gen, 5);
  EXPECT_TRUE(samples.back().clamped);
  EXPECT_EQ(samples.back().constraint.position, traj.evaluate(traj.end_time(), 0));
  EXPECT_EQ(*samples.back().constraint.velocity, (Vec3{}));
}

TEST(ModifyWaypoint, FarModificationRegenerates) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.05));
  const auto wp = *traj.find_waypoint(4);
  const double window = traj.security_window();
  const double t_now = wp.time - 10.0 * window;
  ASSERT_GT(t_now, 0.0);

  const auto outcome = traj.modify_waypoint(4, wp.constraint.position + Vec3{0, 1, 0}, t_now);
  EXPECT_EQ(outcome.kind, ModificationOutcome::Kind::kRegenerated);
  ASSERT_TRUE(outcome.scheduled_swap_time.has_value());
  EXPECT_GT(*outcome.scheduled_swap_time, t_now);
}

TEST(ModifyWaypoint, RegenerationLandsWaypointAtNewPosition) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.05));
  const Vec3 target{12.0, 4.0, 1.4};
  const auto outcome = traj.modify_waypoint(3, target, 0.2);
  ASSERT_EQ(outcome.kind, ModificationOutcome::Kind::kRegenerated);

  traj.poll(*outcome.scheduled_swap_time + 1e-9);
  EXPECT_EQ(traj.epoch(), 1u);
  const auto wp = traj.find_waypoint(3);
  ASSERT_TRUE(wp.has_value());
  EXPECT_LE((wp->constraint.position - target).norm(), 1e-12);
  EXPECT_LE((traj.evaluate(wp->time, 0) - target).norm(), 1e-2);
}

TEST(ModifyWaypoint, InZoneModificationAttainsTarget) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.3));
  const auto wp = *traj.find_waypoint(2);
  const double t_now = wp.time - 0.5 * traj.security_window();
  ASSERT_TRUE(traj.in_security_zone(t_now));

  const Vec3 target = wp.constraint.position + Vec3{-0.3, 0.25, 0.1};
  const auto outcome = traj.modify_waypoint(2, target, t_now);
  ASSERT_EQ(outcome.kind, ModificationOutcome::Kind::kLgmApplied);
  EXPECT_LE((traj.evaluate(wp.time, 0) - target).norm(), 1e-2);
}

TEST(ModifyWaypoint, StackedInZoneModificationsLandAtLatestTarget) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.3));
  const auto wp = *traj.find_waypoint(2);
  const double window = traj.security_window();

  const Vec3 first = wp.constraint.position + Vec3{0.3, 0.0, 0.0};
  const Vec3 second = wp.constraint.position + Vec3{0.5, -0.2, 0.05};
  ASSERT_EQ(traj.modify_waypoint(2, first, wp.time - 0.6 * window).kind,
            ModificationOutcome::Kind::kLgmApplied);
  ASSERT_EQ(traj.modify_waypoint(2, second, wp.time - 0.3 * window).kind,
            ModificationOutcome::Kind::kLgmApplied);
  EXPECT_EQ(traj.modifier_count(), 2);
  EXPECT_LE((traj.evaluate(wp.time, 0) - second).norm(), 1e-2);
}

TEST(ModifyWaypoint, RejectsExactlyAtTraversalTime) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  const auto wp = *traj.find_waypoint(2);
  const auto outcome = traj.modify_waypoint(2, {9, 9, 9}, wp.time);
  EXPECT_EQ(outcome.kind, ModificationOutcome::Kind::kRejectedTooLate);
}

TEST(ModifyWaypoint, PassedWaypointAndUnknownIdAreErrors) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  const auto wp = *traj.find_waypoint(1);
  EXPECT_THROW(traj.modify_waypoint(1, {0, 0, 0}, wp.time + 0.1), WaypointPassed);
  EXPECT_THROW(traj.modify_waypoint(77, {0, 0, 0}, 0.1), std::invalid_argument);
}

TEST(ModifyWaypoint, DispatchMatchesZonePredicate) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.12));
  // Walk the timeline; at each probe the outcome kind must follow the
  // security-zone predicate for next-waypoint targets.
  for (double t = 0.15; t < traj.end_time() - 0.5; t += 0.45) {
    traj.poll(t);
    const auto wps = traj.waypoints();
    const DynamicWaypoint* next = nullptr;
    for (const auto& wp : wps)
      if (!wp.stitch && wp.time > t && (next == nullptr || wp.time < next->time)) next = &wp;
    if (next == nullptr) break;
    const bool zone = traj.in_security_zone(t);
    const auto outcome =
        traj.modify_waypoint(next->id, traj.evaluate(next->time, 0) + Vec3{0.05, 0, 0}, t);
    if (outcome.kind == ModificationOutcome::Kind::kRejectedTooLate) continue;
    EXPECT_EQ(outcome.kind == ModificationOutcome::Kind::kLgmApplied, zone) << "t = " << t;
  }
}

TEST(SwapIn, UnchangedWaypointsStitchSmoothly) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  const double t_gen = 1.0;
  const Vec3 old_pos = traj.evaluate(t_gen + 0.01, 0);

  RegenerationPlan plan = traj.plan_regeneration(t_gen);
  PiecewisePolynomial base = traj.solve_plan(plan);
  const double t_swap = t_gen + traj.estimator()->raw_estimate(plan.waypoint_count());
  const Vec3 before_pos = traj.evaluate(t_swap, 0);
  const Vec3 before_vel = traj.evaluate(t_swap, 1);

  const SwapResult result = traj.swap_in(plan, base, t_swap);
  ASSERT_TRUE(result.swapped);
  EXPECT_EQ(traj.epoch(), 1u);
  EXPECT_LE((traj.evaluate(t_swap, 0) - before_pos).norm(), 1e-2);
  EXPECT_LE((traj.evaluate(t_swap, 1) - before_vel).norm(), 5e-2);

  // Times before the swap are still served by the old generation.
  EXPECT_EQ(traj.evaluate(t_gen + 0.01, 0), old_pos);
}

TEST(SwapIn, EpochIncrementsPerSwap) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  double t_gen = 0.5;
  for (int i = 0; i < 4; ++i) {
    RegenerationPlan plan = traj.plan_regeneration(t_gen);
    const PiecewisePolynomial base = traj.solve_plan(plan);
    const SwapResult result = traj.swap_in(plan, base, t_gen + 0.5 * plan.stitch_window());
    ASSERT_TRUE(result.swapped) << result.reason;
    t_gen += 0.4;
  }
  EXPECT_EQ(traj.epoch(), 4u);
}

TEST(SwapIn, AbortsWhenSolveOutlivesTheStitchWindow) {
  DynamicTrajectory traj(five_waypoints(), virtual_options());
  RegenerationPlan plan = traj.plan_regeneration(1.0);
  const PiecewisePolynomial base = traj.solve_plan(plan);
  const Vec3 before = traj.evaluate(2.0, 0);

  const SwapResult result = traj.swap_in(plan, base, 1.0 + 1.5 * plan.stitch_window());
  EXPECT_FALSE(result.swapped);
  EXPECT_FALSE(result.reason.empty());
  EXPECT_EQ(traj.epoch(), 0u);
  EXPECT_EQ(traj.evaluate(2.0, 0), before);
}

TEST(SwapIn, DiscardsModifiersButKeepsEffectivePositions) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.2));
  const auto wp2 = *traj.find_waypoint(2);
  const Vec3 target = wp2.constraint.position + Vec3{0.3, 0.1, 0.0};
  const double t_mod = wp2.time - 0.5 * traj.security_window();
  ASSERT_EQ(traj.modify_waypoint(2, target, t_mod).kind,
            ModificationOutcome::Kind::kLgmApplied);
  ASSERT_EQ(traj.modifier_count(), 1);

  // Regenerate on a later waypoint; waypoint 2 must stay where the modifier
  // put it even though the modifier itself is discarded by the swap.
  const auto outcome = traj.modify_waypoint(4, {16.0, 1.0, 1.0}, t_mod + 0.01);
  ASSERT_EQ(outcome.kind, ModificationOutcome::Kind::kRegenerated);
  traj.poll(*outcome.scheduled_swap_time + 1e-9);
  ASSERT_EQ(traj.epoch(), 1u);
  EXPECT_EQ(traj.modifier_count(), 0);

  const auto wp2_after = traj.find_waypoint(2);
  if (wp2_after.has_value()) {  // beyond the stitch window: re-interpolated
    EXPECT_LE((traj.evaluate(wp2_after->time, 0) - target).norm(), 1e-2);
  }
}

TEST(VirtualTime, QueuedUpdatesDispatchAfterCommit) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.1));
  const Vec3 target3{12.0, 3.4, 1.3};
  const Vec3 target4{16.0, -0.8, 1.1};

  const auto first = traj.modify_waypoint(3, target3, 0.1);
  ASSERT_EQ(first.kind, ModificationOutcome::Kind::kRegenerated);
  const auto second = traj.modify_waypoint(4, target4, 0.15);
  ASSERT_EQ(second.kind, ModificationOutcome::Kind::kRegenerated);
  EXPECT_FALSE(second.scheduled_swap_time.has_value());  // queued into the next solve

  // Drive time forward; both updates must land after the chained commits.
  for (double t = 0.2; t < traj.end_time(); t += 0.05) traj.poll(t);
  EXPECT_GE(traj.epoch(), 2u);
  EXPECT_LE((traj.evaluate(traj.find_waypoint(3)->time, 0) - target3).norm(), 1e-2);
  EXPECT_LE((traj.evaluate(traj.find_waypoint(4)->time, 0) - target4).norm(), 1e-2);
}

TEST(CompositeContinuity, BoundedStepsAcrossInsertionsAndSwaps) {
  DynamicTrajectory traj(five_waypoints(), virtual_options(0.15));
  const double v_max = traj.options().limits.max_speed;
  const double dt = 1e-3;

  int lgm_applied = 0;
  int swaps = 0;
  Vec3 previous = traj.evaluate(0.0, 0);
  std::uint64_t prev_epoch = traj.epoch();
  double worst = 0.0;

  for (double t = dt; t < traj.end_time(); t += dt) {
    traj.poll(t);
    // Periodically nudge the next waypoint (in zone) and a far one.
    if (std::fmod(t, 0.5) < dt) {
      const auto wps = traj.waypoints();
      for (const auto& wp : wps) {
        if (wp.stitch || wp.time <= t + 1e-6) continue;
        const auto outcome =
            traj.modify_waypoint(wp.id, traj.evaluate(wp.time, 0) + Vec3{0.05, -0.03, 0.02}, t);
        if (outcome.kind == ModificationOutcome::Kind::kLgmApplied) ++lgm_applied;
      }
    }
    const Vec3 now = traj.evaluate(t, 0);
    worst = std::max(worst, (now - previous).norm());
    previous = now;
    const std::uint64_t e = traj.epoch();
    if (e != prev_epoch) ++swaps;
    prev_epoch = e;
  }

  EXPECT_GE(lgm_applied, 1);
  EXPECT_GE(swaps, 1);
  EXPECT_LE(worst, v_max * dt + 1e-2);
}

TEST(WallClock, ConcurrentSamplerNeverSeesTornState) {
  DynamicTrajectory::Options options = virtual_options(0.0);
  options.mode = TimingMode::kWallClock;
  options.limits = DynamicsLimits{5.0, 5.0};
  DynamicTrajectory traj(five_waypoints(), options);
  const double v_max = options.limits.max_speed;

  // Both roles pace their time axis off the same wall clock, as a real
  // sampler/controller pair would.
  const auto anchor = std::chrono::steady_clock::now();
  const auto now_s = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - anchor).count();
  };

  std::atomic<bool> stop{false};
  std::atomic<int> violations{0};
  std::thread sampler([&] {
    Vec3 previous = traj.evaluate(0.0, 0);
    double prev_t = 0.0;
    std::uint64_t prev_epoch = 0;
    while (!stop.load()) {
      const double t = std::min(now_s(), traj.end_time());
      const auto s = traj.sample(t);
      if (!s.position.is_finite()) ++violations;
      if ((s.position - previous).norm() > v_max * (t - prev_t) + 2e-2) ++violations;
      if (s.epoch < prev_epoch) ++violations;
      prev_epoch = s.epoch;
      previous = s.position;
      prev_t = t;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  });

  // Modifier role: shove waypoints around while the sampler runs.
  for (int burst = 0; burst < 20; ++burst) {
    const double t_now = now_s();
    for (const auto& wp : traj.waypoints()) {
      if (wp.stitch || wp.time <= t_now + 0.05) continue;
      try {
        traj.modify_waypoint(wp.id, wp.constraint.position + Vec3{0.01 * burst, 0.0, 0.0}, t_now);
      } catch (const WaypointPassed&) {
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  traj.wait_idle();
  stop.store(true);
  sampler.join();
  EXPECT_EQ(violations.load(), 0);
}

}  // namespace
}  // namespace dyntraj
