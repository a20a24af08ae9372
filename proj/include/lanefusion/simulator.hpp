#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lanefusion/config.hpp"
#include "lanefusion/sensor_ingest.hpp"

namespace lanefusion {

// --- scenario configuration -------------------------------------------

struct RoadSegmentConfig {
  double length_m = 0.0;
  double c0 = 0.0;  ///< curvature at segment start [1/m]
  double c1 = 0.0;  ///< curvature rate over the segment [1/m^2]
};

struct LaneLayoutConfig {
  int count = 3;
  double width_m = 3.5;
  int ego_lane = 1;  ///< 0-based, counted from the rightmost lane
};

struct EgoSimConfig {
  double speed_mps = 30.0;
  double wander_amplitude_m = 0.15;
  double wander_period_s = 8.0;
};

struct OdometrySimConfig {
  double speed_sigma_mps = 0.05;
  double yaw_rate_sigma_radps = 0.002;
};

struct SmcSimConfig {
  bool enabled = true;
  double detection_range_m = 90.0;  // (0, 90]
  double sigma_y0 = 0.05;
  double sigma_theta0 = 0.002;
  double sigma_c0 = 1e-5;
  double sigma_c1 = 2e-7;
  double confidence = 0.9;
};

struct DropoutSpan {
  int boundary = 0;      ///< boundary index, 0 = rightmost
  double s_begin = 0.0;  ///< road arc length [m]
  double s_end = 0.0;
};

struct HrcSimConfig {
  bool enabled = true;
  double max_range_m = 130.0;  // <= 130
  double min_range_m = 5.0;
  double sample_spacing_m = 5.0;
  double sigma_base_m = 0.1;
  double sigma_per_m = 0.002;  // position sigma grows with distance
  double sigma_theta_rad = 0.012;
  double confidence = 0.8;
  double outlier_rate = 0.0;
  double outlier_min_m = 0.5;
  double outlier_max_m = 2.0;
  double lateral_limit_m = 12.0;
  std::vector<DropoutSpan> dropout_spans;
};

struct ExplicitObjectConfig {
  std::int64_t id = 0;
  int lane = 0;
  double ahead_m = 50.0;  ///< initial arc distance ahead of the ego vehicle
  double speed_mps = 30.0;
  std::optional<double> driver_offset_m;  ///< drawn from N(0, sigma) when absent
};

struct LaneChangeEvent {
  std::int64_t object_id = 0;
  double time_s = 0.0;
  int to_lane = 0;
  double duration_s = 3.0;
};

struct TrafficSimConfig {
  int count = 0;  ///< total objects incl. explicit ones
  double speed_min_mps = 27.0;
  double speed_max_mps = 33.0;
  double spawn_min_ahead_m = 25.0;
  double spawn_max_ahead_m = 140.0;
  double pos_sigma_m = 0.3;
  double heading_sigma_rad = 0.05;
  double velocity_sigma_mps = 0.2;
  double driver_lateral_sigma_m = 0.25;
  double report_range_m = 200.0;
  bool maintain_count = true;  ///< respawn auto objects that leave coverage
  std::vector<ExplicitObjectConfig> objects;
  std::vector<LaneChangeEvent> lane_changes;  ///< explicit objects only
};

struct ScenarioConfig {
  std::vector<RoadSegmentConfig> road;
  LaneLayoutConfig lanes;
  double duration_s = 30.0;
  double frame_rate_hz = 10.0;
  std::uint64_t seed = 1;
  EgoSimConfig ego;
  OdometrySimConfig odometry_noise;
  SmcSimConfig smc;
  HrcSimConfig hrc;
  TrafficSimConfig traffic;
};

/// Throws ConfigError on inconsistent configuration (invalid lane
/// references, road shorter than the drive plus sensor horizon, ...).
void validate_scenario(const ScenarioConfig& cfg);

// --- ground truth -------------------------------------------------------

struct BoundaryCurve {
  double offset = 0.0;  ///< lateral offset from the road centerline
  std::vector<double> s;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> theta;
};

struct GroundTruthMap {
  int lane_count = 0;
  double lane_width = 0.0;
  int ego_lane = 0;
  std::vector<BoundaryCurve> boundaries;  ///< lane_count + 1, rightmost first
  std::vector<Pose2> ego_trajectory;      ///< global pose per frame
  std::vector<double> ego_s;              ///< road arc length per frame
};

/// One boundary transformed into a vehicle frame; x strictly increasing.
struct LocalBoundary {
  double offset = 0.0;
  std::vector<double> s;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> theta;
};

/// Boundary curves in the given (global) ego frame, clipped to the
/// evaluation window around the vehicle.
std::vector<LocalBoundary> ground_truth_local(const GroundTruthMap& map, const Pose2& ego_pose);

/// Lateral position of a local boundary at longitudinal x, linearly
/// interpolated; nullopt outside the curve's coverage.
std::optional<double> boundary_lateral_at(const LocalBoundary& b, double x);

/// Road arc length at longitudinal x (same interpolation).
std::optional<double> boundary_arc_at(const LocalBoundary& b, double x);

// --- sensor frames ------------------------------------------------------

struct SensorFrame {
  double t = 0.0;
  ControlVector control;
  std::optional<SmcLaneReport> smc;
  std::optional<HrcFeatureReport> hrc;
  std::vector<TrackedObject> objects;
};

struct Scenario {
  GroundTruthMap truth;
  std::vector<SensorFrame> frames;
};

/// Deterministic scenario generation: identical config and seed produce
/// identical output.
Scenario generate(const ScenarioConfig& cfg);

}  // namespace lanefusion
