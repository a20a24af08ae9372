#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lanefusion/clothoid.hpp"
#include "lanefusion/config.hpp"
#include "lanefusion/feature.hpp"

namespace lanefusion {

/// Ego-lane report of the serial mono camera: left/right marking
/// clothoids with per-parameter standard deviations. A side missing from
/// the report (markings not detected) is simply absent.
struct SmcLaneReport {
  std::optional<Clothoid> left;
  std::optional<Clothoid> right;
  double detection_range_m = 0.0;  // (0, 90]
  double sigma_y0 = 0.0;
  double sigma_theta0 = 0.0;
  double sigma_c0 = 0.0;
  double sigma_c1 = 0.0;
  double confidence = 1.0;
};

/// Marking point features of the high resolution camera.
struct HrcFeatureReport {
  std::vector<LaneFeature> features;
  double max_range_m = 130.0;  // <= 130
};

/// Output of the dynamic-object tracker, already in the vehicle frame.
struct TrackedObject {
  std::int64_t id = 0;
  Pose2 pose;            // object center, heading = motion direction
  double velocity = 0.0; // [m/s]
  Mat3 covariance = Mat3::Identity();
  bool confirmed = false; // verified by at least one radar and one camera
};

struct HrcIngestResult {
  std::vector<LaneFeature> features;
  std::size_t clipped = 0;  // beyond max_range
  std::size_t dropped = 0;  // malformed (covariance / confidence)
};

/// Samples the SMC clothoids every 2 m into lane features; pose from the
/// polynomial and its derivative, covariance by first-order propagation
/// of the reported parameter sigmas. Invalid or absent clothoids yield
/// no features for that side.
std::vector<LaneFeature> sample_smc_features(const SmcLaneReport& r, const IngestConfig& cfg);

/// Pass-through of HRC features with range clipping and validation.
HrcIngestResult ingest_hrc_features(const HrcFeatureReport& r);

/// Two pseudo lane-marking features at lateral +-w/2 of the object,
/// heading equal to the object heading. Covariance is the object
/// covariance plus the lateral driver-offset covariance. Objects behind
/// the ego vehicle produce nothing.
std::optional<std::pair<LaneFeature, LaneFeature>> object_to_features(const TrackedObject& o,
                                                                      double lane_width_m,
                                                                      const IngestConfig& cfg);

/// Lane width from the SMC clothoid pair at x = 0 when available and
/// plausible, otherwise the configured default (3.5 m).
double current_lane_width(const std::optional<SmcLaneReport>& smc, const IngestConfig& cfg);

}  // namespace lanefusion
