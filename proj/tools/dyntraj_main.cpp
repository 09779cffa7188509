// Command-line front end: run profiling benchmarks, simulated races over
// moving gates, and reference-trace dumps for external plotting.

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dyntraj/cli/commands.hpp"
#include "dyntraj/io/scenario.hpp"
#include "dyntraj/min_snap.hpp"

namespace {

constexpr int kExitSchemaError = 2;
constexpr int kExitSolverFailure = 3;

dyntraj::cli::Format parse_format(const std::string& name) {
  return name == "json" ? dyntraj::cli::Format::kJson : dyntraj::cli::Format::kCsv;
}

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::string out_path;
  std::string format = "csv";
};

void apply_overrides(dyntraj::io::Scenario& scenario, const CommonFlags& flags) {
  if (flags.seed) scenario.seed = *flags.seed;
  if (flags.mode) {
    if (*flags.mode == "wall")
      scenario.mode = dyntraj::TimingMode::kWallClock;
    else if (*flags.mode == "virtual")
      scenario.mode = dyntraj::TimingMode::kVirtualTime;
    else
      throw dyntraj::io::ScenarioError("--mode: must be 'wall' or 'virtual'");
  }
}

int with_output(const CommonFlags& flags, const std::function<void(std::ostream&)>& fn) {
  if (flags.out_path.empty()) {
    fn(std::cout);
    return 0;
  }
  std::ofstream out(flags.out_path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot open output file: " << flags.out_path << "\n";
    return 1;
  }
  fn(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dyntraj: dynamic trajectory generation, deformation and race simulation"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--seed", flags.seed, "override the scenario seed");
  app.add_option("--mode", flags.mode, "timing mode: wall|virtual")
      ->check(CLI::IsMember({"wall", "virtual"}));
  app.add_option("--out", flags.out_path, "write output to a file instead of stdout");
  app.add_option("--format", flags.format, "output format: csv|json")
      ->check(CLI::IsMember({"csv", "json"}));

  auto* bench = app.add_subcommand("bench", "profile base generation vs modifier stacking");
  dyntraj::cli::BenchOptions bench_options;
  bench->add_option("--reps", bench_options.repetitions, "timed repetitions per case")
      ->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_options.warmup, "discarded warm-up repetitions")
      ->check(CLI::NonNegativeNumber);

  std::string scenario_path;
  auto* race = app.add_subcommand("race", "run the simulated race grid from a scenario file");
  race->add_option("scenario", scenario_path, "scenario JSON file")->required();
  auto* trace = app.add_subcommand("trace", "dump reference samples from a scenario file");
  trace->add_option("scenario", scenario_path, "scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) {
      if (flags.seed) bench_options.seed = *flags.seed;
      return with_output(flags, [&](std::ostream& out) {
        dyntraj::cli::run_bench(bench_options, parse_format(flags.format), out);
      });
    }
    dyntraj::io::Scenario scenario = dyntraj::io::load_scenario_file(scenario_path);
    apply_overrides(scenario, flags);
    if (race->parsed()) {
      return with_output(flags, [&](std::ostream& out) {
        dyntraj::cli::run_race_command(scenario, parse_format(flags.format), out);
      });
    }
    return with_output(flags, [&](std::ostream& out) {
      dyntraj::cli::run_trace_command(scenario, parse_format(flags.format), out);
    });
  } catch (const dyntraj::io::ScenarioError& e) {
    std::cerr << "scenario error: " << e.what() << "\n";
    return kExitSchemaError;
  } catch (const dyntraj::SolveError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
