// lanefusion command line: simulate highway scenarios, run the perception
// pipeline over them (or over recorded frame logs) and write evaluation
// reports.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lanefusion/runner.hpp"

namespace {

// Exit codes (documented in the README):
//   0 success, 64 usage, 65 invalid configuration, 66 input file problem,
//   70 internal error.
constexpr int kExitUsage = 64;
constexpr int kExitConfig = 65;
constexpr int kExitInput = 66;
constexpr int kExitInternal = 70;

nlohmann::json parse_set_value(const std::string& raw) {
  try {
    return nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json(raw);  // plain string
  }
}

void apply_overrides(const std::vector<std::string>& sets, nlohmann::json& scenario,
                     nlohmann::json& pipeline) {
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw lanefusion::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    std::string key = kv.substr(0, eq);
    const nlohmann::json value = parse_set_value(kv.substr(eq + 1));
    nlohmann::json* target = nullptr;
    if (key.rfind("pipeline.", 0) == 0) {
      target = &pipeline;
      key = key.substr(9);
    } else if (key.rfind("scenario.", 0) == 0) {
      target = &scenario;
      key = key.substr(9);
    } else {
      throw lanefusion::ConfigError("--set keys must start with 'pipeline.' or 'scenario.': '" +
                                    kv + "'");
    }
    std::string pointer;
    for (char c : key) {
      pointer += (c == '.') ? '/' : c;
    }
    (*target)[nlohmann::json::json_pointer("/" + pointer)] = value;
  }
}

std::filesystem::path resolve_out_dir(const std::string& cli_out) {
  if (!cli_out.empty()) {
    return cli_out;
  }
  if (const char* env = std::getenv("LANEFUSION_OUT")) {
    return env;
  }
  return "lanefusion_out";
}

struct CommonArgs {
  std::string out;
  std::vector<std::string> sets;
  int frames = -1;
  int verbosity = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--out", a.out, "Output directory (default: $LANEFUSION_OUT or ./lanefusion_out)");
  cmd->add_option("--set", a.sets,
                  "Override a config value, e.g. --set pipeline.solver.max_iterations=30 or "
                  "--set scenario.seed=7 (repeatable)");
  cmd->add_option("--frames", a.frames, "Process only the first N frames");
  cmd->add_flag("-v,--verbose", a.verbosity, "Increase verbosity (repeatable)");
}

lanefusion::RunOptions make_options(const CommonArgs& a) {
  lanefusion::RunOptions opt;
  opt.out_dir = resolve_out_dir(a.out);
  if (a.frames >= 0) {
    opt.max_frames = static_cast<std::size_t>(a.frames);
  }
  opt.verbosity = a.verbosity;
  return opt;
}

int run_command(const std::string& scenario_path, long long seed, bool has_seed,
                bool write_log, const CommonArgs& args) {
  lanefusion::ScenarioFile file = lanefusion::load_scenario_file(scenario_path);
  nlohmann::json scenario_json = lanefusion::scenario_to_json(file.scenario);
  nlohmann::json pipeline_json = file.pipeline_overrides;
  apply_overrides(args.sets, scenario_json, pipeline_json);
  if (has_seed) {
    scenario_json["seed"] = seed;
  }
  const lanefusion::ScenarioConfig scfg = lanefusion::scenario_from_json(scenario_json);
  const lanefusion::PipelineConfig pcfg = lanefusion::pipeline_config_from_json(pipeline_json);

  lanefusion::RunOptions opt = make_options(args);
  opt.write_frame_log = write_log;
  const lanefusion::RunResult res = lanefusion::run_scenario(scfg, pcfg, opt);
  std::cerr << "processed " << res.frames << " frames, median "
            << res.runtime.median_ms() << " ms/frame, reports in " << opt.out_dir.string()
            << "\n";
  return 0;
}

int replay_command(const std::string& log_path, const std::string& truth_path,
                   const CommonArgs& args) {
  std::ifstream log_is(log_path);
  if (!log_is) {
    std::cerr << "error: cannot open log file: " << log_path << "\n";
    return kExitInput;
  }
  const std::vector<lanefusion::SensorFrame> frames = lanefusion::read_frame_log(log_is);

  lanefusion::GroundTruthMap truth;
  bool have_truth = false;
  if (!truth_path.empty()) {
    std::ifstream truth_is(truth_path);
    if (!truth_is) {
      std::cerr << "error: cannot open truth file: " << truth_path << "\n";
      return kExitInput;
    }
    truth = lanefusion::read_ground_truth(truth_is);
    have_truth = true;
  }

  nlohmann::json scenario_json = nlohmann::json::object();
  nlohmann::json pipeline_json = nlohmann::json::object();
  apply_overrides(args.sets, scenario_json, pipeline_json);
  const lanefusion::PipelineConfig pcfg = lanefusion::pipeline_config_from_json(pipeline_json);

  const lanefusion::RunOptions opt = make_options(args);
  const lanefusion::RunResult res =
      lanefusion::run_frames(frames, have_truth ? &truth : nullptr, pcfg, opt);
  if (!have_truth) {
    std::cerr << "note: no ground-truth file given; deviation report skipped\n";
  }
  std::cerr << "replayed " << res.frames << " frames, reports in " << opt.out_dir.string()
            << "\n";
  return 0;
}

int dump_graph_command(const std::string& scenario_path, long long frame, long long seed,
                       bool has_seed, const CommonArgs& args) {
  lanefusion::ScenarioFile file = lanefusion::load_scenario_file(scenario_path);
  nlohmann::json scenario_json = lanefusion::scenario_to_json(file.scenario);
  nlohmann::json pipeline_json = file.pipeline_overrides;
  apply_overrides(args.sets, scenario_json, pipeline_json);
  if (has_seed) {
    scenario_json["seed"] = seed;
  }
  const lanefusion::ScenarioConfig scfg = lanefusion::scenario_from_json(scenario_json);
  const lanefusion::PipelineConfig pcfg = lanefusion::pipeline_config_from_json(pipeline_json);

  lanefusion::RunOptions opt = make_options(args);
  opt.max_frames = static_cast<std::size_t>(frame) + 1;
  opt.dump_frame = static_cast<std::size_t>(frame);
  lanefusion::run_scenario(scfg, pcfg, opt);
  std::cerr << "graph dump written to "
            << (opt.out_dir / ("graph_frame_" + std::to_string(frame) + ".txt")).string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanefusion: multi-lane highway perception via feature-graph fusion"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Simulate a scenario and run the pipeline");
  std::string run_scenario_path;
  long long run_seed = 0;
  bool run_write_log = false;
  CommonArgs run_args;
  run->add_option("--scenario", run_scenario_path, "Scenario JSON file")->required();
  auto* run_seed_opt = run->add_option("--seed", run_seed, "Override the scenario seed");
  run->add_flag("--write-log", run_write_log, "Also write frames.jsonl and ground_truth.json");
  add_common(run, run_args);

  // replay
  auto* replay = app.add_subcommand("replay", "Run the pipeline over a recorded frame log");
  std::string replay_log, replay_truth;
  CommonArgs replay_args;
  replay->add_option("--log", replay_log, "Frame log (jsonl)")->required();
  replay->add_option("--truth", replay_truth, "Ground-truth JSON for evaluation");
  add_common(replay, replay_args);

  // dump-graph
  auto* dump = app.add_subcommand("dump-graph", "Write a fusion-graph debug dump at a frame");
  std::string dump_scenario_path;
  long long dump_frame = 0, dump_seed = 0;
  CommonArgs dump_args;
  dump->add_option("--scenario", dump_scenario_path, "Scenario JSON file")->required();
  dump->add_option("--frame", dump_frame, "Frame index to dump")->required();
  auto* dump_seed_opt = dump->add_option("--seed", dump_seed, "Override the scenario seed");
  add_common(dump, dump_args);

  // print-config-defaults
  auto* defaults = app.add_subcommand("print-config-defaults",
                                      "Print every tunable with its default value as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (run->parsed()) {
      return run_command(run_scenario_path, run_seed, run_seed_opt->count() > 0, run_write_log,
                         run_args);
    }
    if (replay->parsed()) {
      return replay_command(replay_log, replay_truth, replay_args);
    }
    if (dump->parsed()) {
      return dump_graph_command(dump_scenario_path, dump_frame, dump_seed,
                                dump_seed_opt->count() > 0, dump_args);
    }
    if (defaults->parsed()) {
      nlohmann::json j;
      j["pipeline"] = lanefusion::pipeline_config_to_json(lanefusion::PipelineConfig{});
      j["scenario"] = lanefusion::scenario_to_json(lanefusion::ScenarioConfig{});
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const lanefusion::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lanefusion::IoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
