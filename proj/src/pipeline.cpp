#include "lanefusion/pipeline.hpp"

#include "lanefusion/sensor_ingest.hpp"

namespace lanefusion {

Pipeline::Pipeline(const PipelineConfig& cfg) : cfg_(cfg), graph_(cfg) {}

FrameResult Pipeline::process_frame(const SensorFrame& frame) {
  FrameResult result;

  if (!first_frame_) {
    graph_.advance_odometry(frame.control);
  }
  first_frame_ = false;

  if (frame.smc) {
    for (const LaneFeature& f : sample_smc_features(*frame.smc, cfg_.ingest)) {
      graph_.add_measurement(EdgeKind::kSmcMeas, f);
    }
  }
  if (frame.hrc) {
    const HrcIngestResult hrc = ingest_hrc_features(*frame.hrc);
    result.hrc_clipped = hrc.clipped;
    result.hrc_dropped = hrc.dropped;
    for (const LaneFeature& f : hrc.features) {
      graph_.add_measurement(EdgeKind::kHrcMeas, f);
    }
  }

  const double lane_width = current_lane_width(frame.smc, cfg_.ingest);
  bool width_from_smc = false;
  if (frame.smc && frame.smc->left && frame.smc->right) {
    const double w = frame.smc->left->y0 - frame.smc->right->y0;
    width_from_smc = w >= cfg_.ingest.lane_width_min_m && w <= cfg_.ingest.lane_width_max_m;
  }
  for (const TrackedObject& obj : frame.objects) {
    if (!obj.confirmed || obj.pose.x <= 0.0) {
      continue;
    }
    const auto pair = object_to_features(obj, lane_width, cfg_.ingest);
    if (pair) {
      graph_.add_object_measurement(obj.id, pair->first, pair->second, lane_width,
                                    width_from_smc);
    }
  }

  SolveExtractResult solved = solve_and_extract(graph_, cfg_.solver);
  result.solve = std::move(solved.report);
  const std::vector<LaneFeature>& fused = solved.fused;
  result.fused_features = fused.size();

  if (auto base = fit_base_clothoid(fused, cfg_.lane_model)) {
    base_ = std::move(base);
    result.base_fit_ok = true;
  }
  if (base_) {
    const FeatureGrouping grouping = group_features(fused, *base_, lanes_, cfg_.lane_model);
    const std::vector<LaneOffsetFit> offsets =
        fit_lane_offsets(fused, grouping, *base_, cfg_.lane_model);
    lanes_ = update_tracked_lanes(std::move(lanes_), *base_, offsets, frame.control.dt,
                                  cfg_.lane_model, next_lane_id_);
  } else {
    lanes_ = coast_tracked_lanes(std::move(lanes_), frame.control.dt, cfg_.lane_model);
  }

  result.lanes = lanes_snapshot(lanes_, cfg_.lane_model);
  return result;
}

}  // namespace lanefusion
