#include "lanefusion/runner.hpp"

#include <fstream>
#include <iostream>

namespace lanefusion {

namespace {

std::ofstream open_artifact(const std::filesystem::path& dir, const char* name) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path p = dir / name;
  std::ofstream os(p);
  if (!os) {
    throw IoError("cannot write " + p.string());
  }
  return os;
}

}  // namespace

RunResult run_frames(const std::vector<SensorFrame>& frames, const GroundTruthMap* truth,
                     const PipelineConfig& pcfg, const RunOptions& opt) {
  RunResult result{DeviationTable(pcfg.evaluation), {}, 0, 0, truth != nullptr, {}, {}};

  Pipeline pipeline(pcfg);
  const bool write = !opt.out_dir.empty();
  std::ofstream lanes_os;
  if (write) {
    lanes_os = open_artifact(opt.out_dir, "lanes.jsonl");
  }

  std::size_t count = frames.size();
  if (opt.max_frames) {
    count = std::min(count, *opt.max_frames);
  }
  for (std::size_t k = 0; k < count; ++k) {
    FrameResult fr;
    const double ms = measure_frame_runtime(pipeline, frames[k], &fr);
    result.runtime.per_frame_ms.push_back(ms);

    if (truth && k < truth->ego_trajectory.size()) {
      const std::vector<LocalBoundary> local =
          ground_truth_local(*truth, truth->ego_trajectory[k]);
      FrameDeviations fd = frame_deviations(fr.lanes, local, pcfg.evaluation);
      result.table.add(fd);
      result.frame_deviations.push_back(std::move(fd));
    }
    if (write) {
      write_lane_snapshot_line(lanes_os, k, frames[k].t, fr);
    }
    if (write && ((opt.dump_frame && *opt.dump_frame == k) ||
                  (opt.verbosity >= 2 && k % 50 == 0))) {
      std::ofstream dump_os =
          open_artifact(opt.out_dir, ("graph_frame_" + std::to_string(k) + ".txt").c_str());
      dump_graph(dump_os, pipeline.graph());
    }
    if (opt.verbosity >= 1 && k % 100 == 0) {
      std::cerr << "frame " << k << "/" << count << ": lanes=" << fr.lanes.size()
                << " fused=" << fr.fused_features << " obj=" << fr.solve.final_objective
                << "\n";
    }
    if (opt.observer) {
      opt.observer(k, pipeline, fr);
    }
    result.frame_results.push_back(std::move(fr));
  }
  result.frames = count;
  result.rejected_measurements = pipeline.graph().rejected_measurements();

  if (write) {
    if (truth) {
      std::ofstream csv = open_artifact(opt.out_dir, "deviation_report.csv");
      write_deviation_csv(csv, result.table);
    }
    std::ofstream summary = open_artifact(opt.out_dir, "summary.json");
    summary << summary_to_json(result.table, result.frames, result.rejected_measurements)
                   .dump(2)
            << '\n';
    std::ofstream runtime = open_artifact(opt.out_dir, "runtime.json");
    runtime << runtime_to_json(result.runtime).dump(2) << '\n';
  }
  return result;
}

RunResult run_scenario(const ScenarioConfig& scfg, const PipelineConfig& pcfg,
                       const RunOptions& opt) {
  Scenario sc = generate(scfg);
  if (opt.max_frames && *opt.max_frames < sc.frames.size()) {
    sc.frames.resize(*opt.max_frames);  // log and reports cover the same frames
  }
  if (!opt.out_dir.empty() && opt.write_frame_log) {
    std::ofstream log = open_artifact(opt.out_dir, "frames.jsonl");
    write_frame_log(log, sc.frames);
    std::ofstream truth = open_artifact(opt.out_dir, "ground_truth.json");
    write_ground_truth(truth, sc.truth);
  }
  return run_frames(sc.frames, &sc.truth, pcfg, opt);
}

}  // namespace lanefusion
