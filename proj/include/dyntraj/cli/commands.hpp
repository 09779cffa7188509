#ifndef DYNTRAJ_CLI_COMMANDS_HPP_
#define DYNTRAJ_CLI_COMMANDS_HPP_

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyntraj/bench.hpp"
#include "dyntraj/dynamic_trajectory.hpp"
#include "dyntraj/io/format.hpp"
#include "dyntraj/io/scenario.hpp"
#include "dyntraj/sim/race.hpp"

namespace dyntraj::cli {

enum class Format { kCsv, kJson };

struct BenchOptions {
  int repetitions = 100;
  int warmup = 10;
  std::vector<int> waypoint_counts{6, 14, 26};
  std::vector<int> modifier_counts{1, 8, 64, 512};
  std::uint64_t seed = 1;
};

/// Profiles base-trajectory generation and modifier stacking, and reports the
/// ratio between the two paths for the canonical sizes (6 waypoints vs a
/// 64-modifier stack).
inline void run_bench(const BenchOptions& options, Format format, std::ostream& out) {
  struct Row {
    int size;
    bench::TimingStats stats;
  };
  std::vector<Row> base_rows;
  for (const int n : options.waypoint_counts)
    base_rows.push_back({n, bench::time_base_generation(n, options.repetitions, options.warmup)});
  std::vector<Row> stack_rows;
  for (const int k : options.modifier_counts)
    stack_rows.push_back(
        {k, bench::time_modifier_stack(k, options.repetitions, options.warmup, options.seed)});

  double ratio = 0.0;
  {
    const auto base6 = std::find_if(base_rows.begin(), base_rows.end(),
                                    [](const Row& r) { return r.size == 6; });
    const auto stack64 = std::find_if(stack_rows.begin(), stack_rows.end(),
                                      [](const Row& r) { return r.size == 64; });
    if (base6 != base_rows.end() && stack64 != stack_rows.end() && stack64->stats.mean_s > 0.0)
      ratio = base6->stats.mean_s / stack64->stats.mean_s;
  }

  const std::string config = "bench:reps=" + std::to_string(options.repetitions) +
                             ",warmup=" + std::to_string(options.warmup);
  const std::uint64_t hash = io::fnv1a(config);

  if (format == Format::kJson) {
    nlohmann::json j;
    j["config_hash"] = io::hash_string(hash);
    j["seed"] = options.seed;
    j["repetitions"] = options.repetitions;
    j["warmup"] = options.warmup;
    for (const Row& r : base_rows)
      j["base_generation"].push_back(
          {{"waypoints", r.size}, {"mean_s", r.stats.mean_s}, {"stddev_s", r.stats.stddev_s}});
    for (const Row& r : stack_rows)
      j["modifier_stack"].push_back(
          {{"modifiers", r.size}, {"mean_s", r.stats.mean_s}, {"stddev_s", r.stats.stddev_s}});
    j["ratio_base6_over_stack64"] = ratio;
    out << j.dump(2) << "\n";
    return;
  }
  out << "# config_hash=" << io::hash_string(hash) << " seed=" << options.seed << "\n";
  out << "kind,size,mean_s,stddev_s\n";
  for (const Row& r : base_rows)
    out << "base_generation," << r.size << "," << io::format_number(r.stats.mean_s) << ","
        << io::format_number(r.stats.stddev_s) << "\n";
  for (const Row& r : stack_rows)
    out << "modifier_stack," << r.size << "," << io::format_number(r.stats.mean_s) << ","
        << io::format_number(r.stats.stddev_s) << "\n";
  out << "ratio_base6_over_stack64," << io::format_number(ratio) << ",,\n";
}

inline sim::RaceConfig make_race_config(const io::Scenario& scenario, double speed_limit,
                                        double inflation) {
  const io::RaceSpec& spec = *scenario.race;
  sim::RaceConfig config;
  config.gates = spec.gates;
  config.laps = spec.laps;
  config.speed_limit = speed_limit;
  config.max_acceleration = scenario.limits.max_acceleration;
  config.inflation = inflation;
  config.gate_update_period = spec.gate_update_period;
  config.pass_tolerance = spec.pass_tolerance;
  config.sampler_rate = spec.sampler_rate;
  config.tracker_lag = spec.tracker_lag;
  config.lgm_dispatch = spec.lgm_dispatch;
  config.mode = scenario.mode;
  config.security = scenario.security;
  config.start = spec.start;
  config.finish = spec.finish;
  config.seed = scenario.seed;
  return config;
}

/// Runs the race grid (speed limits x inflations) and emits one row per run
/// in the shape of the published result tables: reference speed pair, vehicle
/// speed pair, elapsed time, success rate.
inline void run_race_command(const io::Scenario& scenario, Format format, std::ostream& out) {
  if (!scenario.race) throw io::ScenarioError("/race: race scenario required");

  struct Row {
    double speed_limit, inflation;
    sim::RaceResult result;
  };
  std::vector<Row> rows;
  for (const double inflation : scenario.inflations)
    for (const double limit : scenario.race->speed_limits)
      rows.push_back({limit, inflation, sim::run_race(make_race_config(scenario, limit, inflation))});

  if (format == Format::kJson) {
    nlohmann::json j;
    j["config_hash"] = io::hash_string(scenario.config_hash);
    j["seed"] = scenario.seed;
    for (const Row& r : rows) {
      j["rows"].push_back({{"speed_limit", r.speed_limit},
                           {"inflation", r.inflation},
                           {"max_speed_ref", r.result.max_speed_reference},
                           {"mean_speed_ref", r.result.mean_speed_reference},
                           {"max_speed_vehicle", r.result.max_speed_vehicle},
                           {"mean_speed_vehicle", r.result.mean_speed_vehicle},
                           {"time_elapsed", r.result.elapsed_time},
                           {"success", r.result.success_rate},
                           {"speed_flagged", r.result.speed_flagged}});
    }
    out << j.dump(2) << "\n";
    return;
  }
  out << "# config_hash=" << io::hash_string(scenario.config_hash) << " seed=" << scenario.seed
      << "\n";
  out << "speed_limit,inflation,max_speed_ref,mean_speed_ref,max_speed_vehicle,mean_speed_vehicle,"
         "time_elapsed,success\n";
  for (const Row& r : rows) {
    out << io::format_number(r.speed_limit) << "," << io::format_number(r.inflation) << ","
        << io::format_number(r.result.max_speed_reference) << ","
        << io::format_number(r.result.mean_speed_reference) << ","
        << io::format_number(r.result.max_speed_vehicle) << ","
        << io::format_number(r.result.mean_speed_vehicle) << ","
        << io::format_number(r.result.elapsed_time) << ","
        << io::format_number(r.result.success_rate) << "\n";
  }
}

/// Builds the trace scenario's trajectory, applies the scripted waypoint
/// modifications, and samples references at the configured rate.
inline void run_trace_command(const io::Scenario& scenario, Format format, std::ostream& out) {
  if (!scenario.trace) throw io::ScenarioError("/trace: trace scenario required");
  const io::TraceSpec& spec = *scenario.trace;

  std::vector<WaypointSpec> specs;
  bool all_timed = true;
  for (std::size_t i = 0; i < spec.waypoints.size(); ++i) {
    specs.push_back({static_cast<std::int64_t>(i), spec.waypoints[i].constraint,
                     spec.waypoints[i].time});
    all_timed = all_timed && spec.waypoints[i].time.has_value();
  }
  if (!all_timed)
    for (WaypointSpec& s : specs) s.time.reset();

  DynamicTrajectory::Options options;
  options.limits = scenario.limits;
  options.security = scenario.security;
  options.mode = scenario.mode;
  options.inflation = scenario.inflations.front();
  DynamicTrajectory traj(specs, options);

  std::vector<io::TraceModification> mods = spec.modifications;
  std::sort(mods.begin(), mods.end(),
            [](const auto& a, const auto& b) { return a.t < b.t; });
  std::size_t next_mod = 0;

  const double dt = 1.0 / spec.sample_rate;
  nlohmann::json json_rows = nlohmann::json::array();
  const bool csv = format == Format::kCsv;
  if (csv) {
    out << "# config_hash=" << io::hash_string(scenario.config_hash) << " seed=" << scenario.seed
        << "\n";
    out << "t,pos_x,pos_y,pos_z,vel_x,vel_y,vel_z,acc_x,acc_y,acc_z,epoch,modifiers\n";
  }

  for (double t = traj.start_time(); t <= traj.end_time(); t += dt) {
    while (next_mod < mods.size() && mods[next_mod].t <= t) {
      const io::TraceModification& m = mods[next_mod];
      traj.poll(m.t);
      const auto wp = traj.find_waypoint(m.waypoint_index);
      if (wp && wp->time > m.t) traj.modify_waypoint(m.waypoint_index, m.position, m.t);
      ++next_mod;
    }
    traj.poll(t);
    const DynamicTrajectory::Sample s = traj.sample(t);
    if (csv) {
      out << io::format_number(t) << "," << io::format_number(s.position.x) << ","
          << io::format_number(s.position.y) << "," << io::format_number(s.position.z) << ","
          << io::format_number(s.velocity.x) << "," << io::format_number(s.velocity.y) << ","
          << io::format_number(s.velocity.z) << "," << io::format_number(s.acceleration.x) << ","
          << io::format_number(s.acceleration.y) << "," << io::format_number(s.acceleration.z)
          << "," << s.epoch << "," << s.modifier_count << "\n";
    } else {
      json_rows.push_back({{"t", t},
                           {"position", {s.position.x, s.position.y, s.position.z}},
                           {"velocity", {s.velocity.x, s.velocity.y, s.velocity.z}},
                           {"acceleration", {s.acceleration.x, s.acceleration.y, s.acceleration.z}},
                           {"epoch", s.epoch},
                           {"modifiers", s.modifier_count}});
    }
  }
  if (!csv) {
    nlohmann::json j;
    j["config_hash"] = io::hash_string(scenario.config_hash);
    j["seed"] = scenario.seed;
    j["rows"] = std::move(json_rows);
    out << j.dump(2) << "\n";
  }
}

}  // namespace dyntraj::cli

#endif  // DYNTRAJ_CLI_COMMANDS_HPP_
