#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "lanefusion/evaluation.hpp"
#include "lanefusion/io.hpp"
#include "lanefusion/pipeline.hpp"

namespace lanefusion {

struct RunOptions {
  std::filesystem::path out_dir;  // empty: no artifacts written
  std::optional<std::size_t> max_frames;
  int verbosity = 0;
  bool write_frame_log = false;             // frames.jsonl + ground_truth.json
  std::optional<std::size_t> dump_frame;    // write one graph dump after this frame
  /// Called after every processed frame (acceptance tests hook in here).
  std::function<void(std::size_t, const Pipeline&, const FrameResult&)> observer;
};

struct RunResult {
  DeviationTable table;
  RuntimeStats runtime;
  std::size_t frames = 0;
  std::size_t rejected_measurements = 0;
  bool truth_available = false;
  std::vector<FrameResult> frame_results;
  std::vector<FrameDeviations> frame_deviations;  // empty without truth
};

/// Feeds recorded or generated frames through one pipeline instance,
/// accumulates the deviation statistics when ground truth is available
/// and writes the report artifacts into out_dir.
RunResult run_frames(const std::vector<SensorFrame>& frames, const GroundTruthMap* truth,
                     const PipelineConfig& pcfg, const RunOptions& opt);

/// Generates the scenario, then runs it.
RunResult run_scenario(const ScenarioConfig& scfg, const PipelineConfig& pcfg,
                       const RunOptions& opt);

}  // namespace lanefusion
