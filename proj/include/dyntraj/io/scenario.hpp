#ifndef DYNTRAJ_IO_SCENARIO_HPP_
#define DYNTRAJ_IO_SCENARIO_HPP_

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyntraj/dynamic_trajectory.hpp"
#include "dyntraj/io/format.hpp"
#include "dyntraj/sim/race.hpp"
#include "dyntraj/vec3.hpp"
#include "dyntraj/waypoint.hpp"

namespace dyntraj::io {

/// Scenario file violated the schema. The message carries the JSON path of
/// the offending field.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TraceWaypointSpec {
  WaypointConstraint constraint;
  std::optional<double> time;
};

struct TraceModification {
  double t = 0.0;
  int waypoint_index = 0;
  Vec3 position;
};

struct TraceSpec {
  std::vector<TraceWaypointSpec> waypoints;
  double sample_rate = 1000.0;
  std::vector<TraceModification> modifications;
};

struct RaceSpec {
  std::vector<sim::Gate> gates;
  int laps = 5;
  std::vector<double> speed_limits;
  double gate_update_period = 0.1;
  double pass_tolerance = 0.25;
  double sampler_rate = 100.0;
  double tracker_lag = 0.05;
  bool lgm_dispatch = true;
  Vec3 start{0.0, 0.0, 1.5};
  std::optional<Vec3> finish;
};

struct Scenario {
  enum class Kind { kRace, kTrace };

  int schema_version = 1;
  Kind kind = Kind::kTrace;
  std::uint64_t seed = 1;
  TimingMode mode = TimingMode::kVirtualTime;
  DynamicsLimits limits{5.0, 5.0};
  SecurityConfig security;
  std::vector<double> inflations{0.0};
  std::optional<RaceSpec> race;
  std::optional<TraceSpec> trace;

  std::uint64_t config_hash = 0;
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ScenarioError(path + ": " + what);
}

inline void check_known_fields(const json& j, const std::string& path,
                               const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) fail(path + "/" + key, "unknown field");
}

inline double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

inline bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline Vec3 get_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) fail(path, "expected an array of 3 numbers");
  Vec3 v{get_number(j[0], path + "/0"), get_number(j[1], path + "/1"),
         get_number(j[2], path + "/2")};
  if (!v.is_finite()) fail(path, "components must be finite");
  return v;
}

inline sim::Gate parse_gate(const json& j, const std::string& path) {
  check_known_fields(j, path, {"name", "center", "normal", "half_width", "motion"});
  sim::Gate gate;
  if (!j.contains("center")) fail(path + "/center", "required field missing");
  gate.center = get_vec3(j.at("center"), path + "/center");
  if (j.contains("name")) gate.name = get_string(j.at("name"), path + "/name");
  if (j.contains("normal")) gate.normal = get_vec3(j.at("normal"), path + "/normal").normalized();
  if (j.contains("half_width")) gate.half_width = get_number(j.at("half_width"), path + "/half_width");
  if (gate.half_width <= 0.0) fail(path + "/half_width", "must be positive");
  if (j.contains("motion")) {
    const std::string mpath = path + "/motion";
    const json& m = j.at("motion");
    check_known_fields(m, mpath, {"axis", "amplitude", "speed"});
    if (m.contains("axis")) gate.motion.axis = get_vec3(m.at("axis"), mpath + "/axis").normalized();
    if (m.contains("amplitude")) gate.motion.amplitude = get_number(m.at("amplitude"), mpath + "/amplitude");
    if (m.contains("speed")) gate.motion.speed = get_number(m.at("speed"), mpath + "/speed");
    if (gate.motion.amplitude < 0.0) fail(mpath + "/amplitude", "must be non-negative");
    if (gate.motion.speed < 0.0) fail(mpath + "/speed", "must be non-negative");
  }
  return gate;
}

inline RaceSpec parse_race(const json& j, const std::string& path) {
  check_known_fields(j, path,
                     {"gates", "laps", "speed_limits", "gate_update_period", "pass_tolerance",
                      "sampler_rate", "tracker_lag", "lgm_dispatch", "start", "finish"});
  RaceSpec race;
  if (!j.contains("gates") || !j.at("gates").is_array() || j.at("gates").empty())
    fail(path + "/gates", "at least one gate is required");
  int gi = 0;
  for (const json& g : j.at("gates"))
    race.gates.push_back(parse_gate(g, path + "/gates/" + std::to_string(gi++)));
  if (j.contains("laps")) race.laps = get_int(j.at("laps"), path + "/laps");
  if (race.laps < 1) fail(path + "/laps", "must be at least 1");
  if (!j.contains("speed_limits") || !j.at("speed_limits").is_array() || j.at("speed_limits").empty())
    fail(path + "/speed_limits", "at least one speed limit is required");
  int si = 0;
  for (const json& s : j.at("speed_limits")) {
    const double v = get_number(s, path + "/speed_limits/" + std::to_string(si++));
    if (v <= 0.0) fail(path + "/speed_limits", "limits must be positive");
    race.speed_limits.push_back(v);
  }
  if (j.contains("gate_update_period"))
    race.gate_update_period = get_number(j.at("gate_update_period"), path + "/gate_update_period");
  if (j.contains("pass_tolerance"))
    race.pass_tolerance = get_number(j.at("pass_tolerance"), path + "/pass_tolerance");
  if (j.contains("sampler_rate"))
    race.sampler_rate = get_number(j.at("sampler_rate"), path + "/sampler_rate");
  if (j.contains("tracker_lag"))
    race.tracker_lag = get_number(j.at("tracker_lag"), path + "/tracker_lag");
  if (j.contains("lgm_dispatch")) race.lgm_dispatch = get_bool(j.at("lgm_dispatch"), path + "/lgm_dispatch");
  if (j.contains("start")) race.start = get_vec3(j.at("start"), path + "/start");
  if (j.contains("finish")) race.finish = get_vec3(j.at("finish"), path + "/finish");
  return race;
}

inline TraceSpec parse_trace(const json& j, const std::string& path) {
  check_known_fields(j, path, {"waypoints", "sample_rate", "modifications"});
  TraceSpec trace;
  if (!j.contains("waypoints") || !j.at("waypoints").is_array() || j.at("waypoints").size() < 2)
    fail(path + "/waypoints", "at least two waypoints are required");
  int wi = 0;
  for (const json& w : j.at("waypoints")) {
    const std::string wpath = path + "/waypoints/" + std::to_string(wi++);
    check_known_fields(w, wpath, {"position", "velocity", "acceleration", "time"});
    TraceWaypointSpec spec;
    if (!w.contains("position")) fail(wpath + "/position", "required field missing");
    spec.constraint.position = get_vec3(w.at("position"), wpath + "/position");
    if (w.contains("velocity")) spec.constraint.velocity = get_vec3(w.at("velocity"), wpath + "/velocity");
    if (w.contains("acceleration"))
      spec.constraint.acceleration = get_vec3(w.at("acceleration"), wpath + "/acceleration");
    if (w.contains("time")) spec.time = get_number(w.at("time"), wpath + "/time");
    trace.waypoints.push_back(spec);
  }
  if (j.contains("sample_rate")) trace.sample_rate = get_number(j.at("sample_rate"), path + "/sample_rate");
  if (trace.sample_rate <= 0.0) fail(path + "/sample_rate", "must be positive");
  if (j.contains("modifications")) {
    if (!j.at("modifications").is_array()) fail(path + "/modifications", "expected an array");
    int mi = 0;
    for (const json& m : j.at("modifications")) {
      const std::string mpath = path + "/modifications/" + std::to_string(mi++);
      check_known_fields(m, mpath, {"t", "waypoint", "position"});
      TraceModification mod;
      if (!m.contains("t")) fail(mpath + "/t", "required field missing");
      mod.t = get_number(m.at("t"), mpath + "/t");
      if (!m.contains("waypoint")) fail(mpath + "/waypoint", "required field missing");
      mod.waypoint_index = get_int(m.at("waypoint"), mpath + "/waypoint");
      if (mod.waypoint_index < 0 || mod.waypoint_index >= static_cast<int>(trace.waypoints.size()))
        fail(mpath + "/waypoint", "waypoint index out of range");
      if (!m.contains("position")) fail(mpath + "/position", "required field missing");
      mod.position = get_vec3(m.at("position"), mpath + "/position");
      trace.modifications.push_back(mod);
    }
  }
  return trace;
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  using detail::fail;
  detail::check_known_fields(j, "", {"schema_version", "kind", "seed", "mode", "limits",
                                     "security", "inflation", "race", "trace"});
  Scenario scenario;
  if (!j.contains("schema_version")) fail("/schema_version", "required field missing");
  scenario.schema_version = detail::get_int(j.at("schema_version"), "/schema_version");
  if (scenario.schema_version != 1) fail("/schema_version", "unsupported schema version");

  if (!j.contains("kind")) fail("/kind", "required field missing");
  const std::string kind = detail::get_string(j.at("kind"), "/kind");
  if (kind == "race")
    scenario.kind = Scenario::Kind::kRace;
  else if (kind == "trace")
    scenario.kind = Scenario::Kind::kTrace;
  else
    fail("/kind", "must be 'race' or 'trace'");

  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
      fail("/seed", "expected an integer");
    scenario.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("mode")) {
    const std::string mode = detail::get_string(j.at("mode"), "/mode");
    if (mode == "virtual")
      scenario.mode = TimingMode::kVirtualTime;
    else if (mode == "wall")
      scenario.mode = TimingMode::kWallClock;
    else
      fail("/mode", "must be 'virtual' or 'wall'");
  }
  if (j.contains("limits")) {
    detail::check_known_fields(j.at("limits"), "/limits", {"v_max", "a_max"});
    if (j.at("limits").contains("v_max"))
      scenario.limits.max_speed = detail::get_number(j.at("limits").at("v_max"), "/limits/v_max");
    if (j.at("limits").contains("a_max"))
      scenario.limits.max_acceleration = detail::get_number(j.at("limits").at("a_max"), "/limits/a_max");
    if (!scenario.limits.valid()) fail("/limits", "limits must be strictly positive");
  }
  if (j.contains("security")) {
    const nlohmann::json& s = j.at("security");
    detail::check_known_fields(s, "/security", {"c_security", "n_smooth", "alpha"});
    if (s.contains("c_security"))
      scenario.security.safety_factor = detail::get_number(s.at("c_security"), "/security/c_security");
    if (s.contains("n_smooth"))
      scenario.security.stitch_count = detail::get_int(s.at("n_smooth"), "/security/n_smooth");
    if (s.contains("alpha"))
      scenario.security.stitch_margin = detail::get_number(s.at("alpha"), "/security/alpha");
    try {
      scenario.security.require_valid();
    } catch (const std::invalid_argument& e) {
      fail("/security", e.what());
    }
  }
  if (j.contains("inflation")) {
    scenario.inflations.clear();
    const nlohmann::json& inf = j.at("inflation");
    if (inf.is_array()) {
      int ii = 0;
      for (const nlohmann::json& v : inf)
        scenario.inflations.push_back(detail::get_number(v, "/inflation/" + std::to_string(ii++)));
    } else {
      scenario.inflations.push_back(detail::get_number(inf, "/inflation"));
    }
    for (const double v : scenario.inflations)
      if (v < 0.0) fail("/inflation", "must be non-negative");
  }

  if (scenario.kind == Scenario::Kind::kRace) {
    if (!j.contains("race")) fail("/race", "required for kind 'race'");
    scenario.race = detail::parse_race(j.at("race"), "/race");
    if (j.contains("trace")) fail("/trace", "not allowed for kind 'race'");
  } else {
    if (!j.contains("trace")) fail("/trace", "required for kind 'trace'");
    scenario.trace = detail::parse_trace(j.at("trace"), "/trace");
    if (j.contains("race")) fail("/race", "not allowed for kind 'trace'");
    if (scenario.inflations.size() != 1) fail("/inflation", "trace scenarios take a single inflation");
  }

  scenario.config_hash = fnv1a(j.dump());
  return scenario;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open scenario file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(path + ": invalid JSON: " + e.what());
  }
  return parse_scenario(j);
}

}  // namespace dyntraj::io

#endif  // DYNTRAJ_IO_SCENARIO_HPP_
