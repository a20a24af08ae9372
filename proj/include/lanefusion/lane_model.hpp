#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lanefusion/clothoid.hpp"
#include "lanefusion/config.hpp"
#include "lanefusion/feature.hpp"

namespace lanefusion {

/// Shared road course (heading, curvature, curvature rate) fitted
/// robustly to the fused feature headings. Lanes differ from it only by
/// their lateral offset.
struct BaseClothoid {
  double theta0 = 0.0;
  double c0 = 0.0;
  double c1 = 0.0;
  Mat3 param_covariance = Mat3::Identity();
  std::vector<std::size_t> inliers;   // indices into the fitted feature list
  std::vector<std::size_t> outliers;
};

/// Weighted least squares of feature headings against [1, x, x^2/2] with
/// iterative outlier trimming (2.5 robust standard deviations, MAD
/// scale). Returns nullopt when fewer than min_fit_features remain, the
/// x-span is too short, or trimming would remove more than
/// max_trim_fraction of the input.
std::optional<BaseClothoid> fit_base_clothoid(std::span<const LaneFeature> features,
                                              const LaneModelConfig& cfg,
                                              std::string* why = nullptr);

struct FeatureGroup {
  std::optional<std::uint64_t> lane_id;  // matched previous lane, if any
  double seed_offset = 0.0;
  std::vector<std::size_t> members;
};

struct FeatureGrouping {
  std::vector<FeatureGroup> groups;
  std::vector<std::size_t> ungrouped;
};

/// Kalman-tracked lane boundary: state [y0, theta0, c0, c1].
struct TrackedLane {
  std::uint64_t id = 0;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  int age = 0;          // frames since spawn
  int support = 0;      // features matched this frame
  int unsupported = 0;  // consecutive frames without support
};

/// Assigns features to candidate clothoids built from previous-lane
/// offsets and the current base course (lateral gate w/4); leftover
/// near-range features are projected onto the y-axis and 1-D clustered
/// to seed new groups. Every feature lands in at most one group.
FeatureGrouping group_features(std::span<const LaneFeature> features, const BaseClothoid& base,
                               std::span<const TrackedLane> previous,
                               const LaneModelConfig& cfg);

struct LaneOffsetFit {
  std::optional<std::uint64_t> lane_id;
  double y0 = 0.0;
  std::size_t support = 0;
  double variance = 0.0;  // of the fitted offset
};

/// One-parameter weighted fit of the lateral offset per group;
/// undersized groups are dropped.
std::vector<LaneOffsetFit> fit_lane_offsets(std::span<const LaneFeature> features,
                                            const FeatureGrouping& grouping,
                                            const BaseClothoid& base,
                                            const LaneModelConfig& cfg);

/// Kalman predict/update cycle for all lanes: matched lanes take
/// [y0, theta0, c0, c1] measurements, unmatched lanes coast and expire
/// after expire_after_frames, unmatched offsets spawn new lanes when far
/// enough from every live lane. Converging lanes merge (older wins).
std::vector<TrackedLane> update_tracked_lanes(std::vector<TrackedLane> lanes,
                                              const BaseClothoid& base,
                                              const std::vector<LaneOffsetFit>& offsets,
                                              double dt, const LaneModelConfig& cfg,
                                              std::uint64_t& next_lane_id);

/// Coast-only step for frames without a usable base fit.
std::vector<TrackedLane> coast_tracked_lanes(std::vector<TrackedLane> lanes, double dt,
                                             const LaneModelConfig& cfg);

/// Lane clothoids of the current step, sorted by offset descending
/// (leftmost first), valid on [0, horizon].
std::vector<Clothoid> lanes_snapshot(std::span<const TrackedLane> lanes,
                                     const LaneModelConfig& cfg);

}  // namespace lanefusion
