#pragma once

#include <optional>
#include <vector>

#include "lanefusion/config.hpp"
#include "lanefusion/fusion_graph.hpp"
#include "lanefusion/lane_model.hpp"
#include "lanefusion/optimizer.hpp"
#include "lanefusion/simulator.hpp"

namespace lanefusion {

struct FrameResult {
  std::vector<Clothoid> lanes;
  std::size_t fused_features = 0;
  SolveReport solve;
  bool base_fit_ok = false;
  std::size_t hrc_clipped = 0;
  std::size_t hrc_dropped = 0;
};

/// Full perception step: odometry advance, SMC/HRC/object ingestion into
/// the fusion graph, Gauss-Newton solve, fused-feature extraction and
/// multi-lane clothoid tracking. One instance per stream; single-threaded.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);

  FrameResult process_frame(const SensorFrame& frame);

  const FusionGraph& graph() const { return graph_; }
  const std::vector<TrackedLane>& tracked_lanes() const { return lanes_; }
  const std::optional<BaseClothoid>& base() const { return base_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  FusionGraph graph_;
  std::vector<TrackedLane> lanes_;
  std::optional<BaseClothoid> base_;
  std::uint64_t next_lane_id_ = 1;
  bool first_frame_ = true;
};

}  // namespace lanefusion
