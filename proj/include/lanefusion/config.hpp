#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace lanefusion {

/// Raised for malformed configuration files, unknown keys or invalid values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AssociationConfig {
  double euclidean_gate_m = 1.0;
  double heading_gate_rad = 0.3490658503988659;  // 20 deg
  double mahalanobis_gate = 7.814727903251179;   // chi-square 95%, 3 dof
};

struct OdometryNoiseConfig {
  double sigma_xy_per_m = 0.02;
  double sigma_xy_floor_m = 0.01;
  double sigma_theta_per_rad = 0.01;
  double sigma_theta_floor_rad = 0.002;
};

struct SmoothingConfig {
  double sigma_y_m = 0.1;
  double sigma_theta_rad = 0.02;
  /// Switch prior weight: the weighted residual of a healthy edge
  /// concentrates near its chi-square dof rather than zero, so the prior
  /// must outweigh that level for active edges to keep s near 1, while
  /// staying below the residual level of lane-change crossing edges.
  double switch_prior_information = 14.0;
};

struct WidthEdgeConfig {
  double sigma_smc_m = 0.15;     // lane width taken from SMC clothoids
  double sigma_default_m = 0.3;  // lane width fallback
  double sigma_theta_rad = 0.02;
};

struct IngestConfig {
  double smc_longitudinal_sigma_m = 0.6;
  double driver_lateral_sigma_m = 0.25;
  double object_feature_confidence = 0.5;
  double lane_width_min_m = 2.5;
  double lane_width_max_m = 4.5;
  double default_lane_width_m = 3.5;
};

struct GraphConfig {
  int pose_window = 50;        // tau; at most tau+1 pose vertices
  double prune_behind_m = 5.0; // features farther behind are removed
  double max_covariance_condition = 1e12;
};

struct SolverConfig {
  int max_iterations = 20;
  double update_tolerance = 1e-6;
  int max_step_halvings = 5;
  /// "marginal" extracts feature covariances from the inverse normal
  /// matrix; "diagonal" uses a cheap confidence-scaled fallback.
  std::string covariance_mode = "marginal";
  double fallback_position_sigma_m = 0.5;
  double fallback_heading_sigma_rad = 0.05;
};

struct LaneModelConfig {
  // base clothoid fit
  int min_fit_features = 3;
  double min_fit_span_m = 20.0;
  double trim_threshold = 2.5;  // standardized-residual cut
  int max_trim_iterations = 10;
  double max_trim_fraction = 0.5;
  double min_feature_weight = 1e-3;
  // grouping
  double lateral_gate_fraction = 0.25;  // of lane width
  double near_range_m = 40.0;
  double cluster_radius_m = 0.5;
  int min_cluster_size = 3;
  /// Features must be this well-confirmed to seed a new lane; single
  /// spurious detections never saturate their confidence and stay out.
  double cluster_min_confidence = 0.9;
  double assumed_lane_width_m = 3.5;
  // tracking
  double process_sigma_y0_m = 0.05;  // per 0.1 s reference frame
  double process_sigma_theta0_rad = 0.005;
  double process_sigma_c0 = 1e-5;
  double process_sigma_c1 = 1e-7;
  double init_sigma_y0_m = 0.5;
  double init_sigma_theta0_rad = 0.05;
  double init_sigma_c0 = 1e-3;
  double init_sigma_c1 = 1e-5;
  int expire_after_frames = 10;
  double spawn_gate_m = 2.0;
  double merge_gate_m = 1.0;
  double horizon_m = 120.0;
};

struct EvaluationConfig {
  double sample_step_m = 10.0;
  double max_distance_m = 120.0;
  double match_gate_m = 1.5;
};

/// All tunables of the perception pipeline with their defaults. Every
/// value is printable via the CLI so experiment setups are
/// self-documenting.
struct PipelineConfig {
  AssociationConfig association;
  OdometryNoiseConfig odometry;
  SmoothingConfig smoothing;
  WidthEdgeConfig width;
  IngestConfig ingest;
  GraphConfig graph;
  SolverConfig solver;
  LaneModelConfig lane_model;
  EvaluationConfig evaluation;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

/// Parses a pipeline config from JSON, starting from defaults; unknown
/// keys or type mismatches raise ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

}  // namespace lanefusion
