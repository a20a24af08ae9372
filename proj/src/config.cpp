#include "lanefusion/config.hpp"

#include <set>

namespace lanefusion {

using nlohmann::json;

namespace {

/// Reads known keys of one JSON object and rejects everything else, so
/// typos in config files fail loudly instead of silently using defaults.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      return;
    }
    try {
      it->get_to(out);
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

json pipeline_config_to_json(const PipelineConfig& c) {
  json j;
  j["association"] = {{"euclidean_gate_m", c.association.euclidean_gate_m},
                      {"heading_gate_rad", c.association.heading_gate_rad},
                      {"mahalanobis_gate", c.association.mahalanobis_gate}};
  j["odometry"] = {{"sigma_xy_per_m", c.odometry.sigma_xy_per_m},
                   {"sigma_xy_floor_m", c.odometry.sigma_xy_floor_m},
                   {"sigma_theta_per_rad", c.odometry.sigma_theta_per_rad},
                   {"sigma_theta_floor_rad", c.odometry.sigma_theta_floor_rad}};
  j["smoothing"] = {{"sigma_y_m", c.smoothing.sigma_y_m},
                    {"sigma_theta_rad", c.smoothing.sigma_theta_rad},
                    {"switch_prior_information", c.smoothing.switch_prior_information}};
  j["width"] = {{"sigma_smc_m", c.width.sigma_smc_m},
                {"sigma_default_m", c.width.sigma_default_m},
                {"sigma_theta_rad", c.width.sigma_theta_rad}};
  j["ingest"] = {{"smc_longitudinal_sigma_m", c.ingest.smc_longitudinal_sigma_m},
                 {"driver_lateral_sigma_m", c.ingest.driver_lateral_sigma_m},
                 {"object_feature_confidence", c.ingest.object_feature_confidence},
                 {"lane_width_min_m", c.ingest.lane_width_min_m},
                 {"lane_width_max_m", c.ingest.lane_width_max_m},
                 {"default_lane_width_m", c.ingest.default_lane_width_m}};
  j["graph"] = {{"pose_window", c.graph.pose_window},
                {"prune_behind_m", c.graph.prune_behind_m},
                {"max_covariance_condition", c.graph.max_covariance_condition}};
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"update_tolerance", c.solver.update_tolerance},
                 {"max_step_halvings", c.solver.max_step_halvings},
                 {"covariance_mode", c.solver.covariance_mode},
                 {"fallback_position_sigma_m", c.solver.fallback_position_sigma_m},
                 {"fallback_heading_sigma_rad", c.solver.fallback_heading_sigma_rad}};
  j["lane_model"] = {{"min_fit_features", c.lane_model.min_fit_features},
                     {"min_fit_span_m", c.lane_model.min_fit_span_m},
                     {"trim_threshold", c.lane_model.trim_threshold},
                     {"max_trim_iterations", c.lane_model.max_trim_iterations},
                     {"max_trim_fraction", c.lane_model.max_trim_fraction},
                     {"min_feature_weight", c.lane_model.min_feature_weight},
                     {"lateral_gate_fraction", c.lane_model.lateral_gate_fraction},
                     {"near_range_m", c.lane_model.near_range_m},
                     {"cluster_radius_m", c.lane_model.cluster_radius_m},
                     {"min_cluster_size", c.lane_model.min_cluster_size},
                     {"cluster_min_confidence", c.lane_model.cluster_min_confidence},
                     {"assumed_lane_width_m", c.lane_model.assumed_lane_width_m},
                     {"process_sigma_y0_m", c.lane_model.process_sigma_y0_m},
                     {"process_sigma_theta0_rad", c.lane_model.process_sigma_theta0_rad},
                     {"process_sigma_c0", c.lane_model.process_sigma_c0},
                     {"process_sigma_c1", c.lane_model.process_sigma_c1},
                     {"init_sigma_y0_m", c.lane_model.init_sigma_y0_m},
                     {"init_sigma_theta0_rad", c.lane_model.init_sigma_theta0_rad},
                     {"init_sigma_c0", c.lane_model.init_sigma_c0},
                     {"init_sigma_c1", c.lane_model.init_sigma_c1},
                     {"expire_after_frames", c.lane_model.expire_after_frames},
                     {"spawn_gate_m", c.lane_model.spawn_gate_m},
                     {"merge_gate_m", c.lane_model.merge_gate_m},
                     {"horizon_m", c.lane_model.horizon_m}};
  j["evaluation"] = {{"sample_step_m", c.evaluation.sample_step_m},
                     {"max_distance_m", c.evaluation.max_distance_m},
                     {"match_gate_m", c.evaluation.match_gate_m}};
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  StrictObject root(j, "pipeline");
  if (const json* a = root.child("association")) {
    StrictObject o(*a, "pipeline.association");
    o.get("euclidean_gate_m", c.association.euclidean_gate_m);
    o.get("heading_gate_rad", c.association.heading_gate_rad);
    o.get("mahalanobis_gate", c.association.mahalanobis_gate);
    o.finish();
  }
  if (const json* a = root.child("odometry")) {
    StrictObject o(*a, "pipeline.odometry");
    o.get("sigma_xy_per_m", c.odometry.sigma_xy_per_m);
    o.get("sigma_xy_floor_m", c.odometry.sigma_xy_floor_m);
    o.get("sigma_theta_per_rad", c.odometry.sigma_theta_per_rad);
    o.get("sigma_theta_floor_rad", c.odometry.sigma_theta_floor_rad);
    o.finish();
  }
  if (const json* a = root.child("smoothing")) {
    StrictObject o(*a, "pipeline.smoothing");
    o.get("sigma_y_m", c.smoothing.sigma_y_m);
    o.get("sigma_theta_rad", c.smoothing.sigma_theta_rad);
    o.get("switch_prior_information", c.smoothing.switch_prior_information);
    o.finish();
  }
  if (const json* a = root.child("width")) {
    StrictObject o(*a, "pipeline.width");
    o.get("sigma_smc_m", c.width.sigma_smc_m);
    o.get("sigma_default_m", c.width.sigma_default_m);
    o.get("sigma_theta_rad", c.width.sigma_theta_rad);
    o.finish();
  }
  if (const json* a = root.child("ingest")) {
    StrictObject o(*a, "pipeline.ingest");
    o.get("smc_longitudinal_sigma_m", c.ingest.smc_longitudinal_sigma_m);
    o.get("driver_lateral_sigma_m", c.ingest.driver_lateral_sigma_m);
    o.get("object_feature_confidence", c.ingest.object_feature_confidence);
    o.get("lane_width_min_m", c.ingest.lane_width_min_m);
    o.get("lane_width_max_m", c.ingest.lane_width_max_m);
    o.get("default_lane_width_m", c.ingest.default_lane_width_m);
    o.finish();
  }
  if (const json* a = root.child("graph")) {
    StrictObject o(*a, "pipeline.graph");
    o.get("pose_window", c.graph.pose_window);
    o.get("prune_behind_m", c.graph.prune_behind_m);
    o.get("max_covariance_condition", c.graph.max_covariance_condition);
    o.finish();
  }
  if (const json* a = root.child("solver")) {
    StrictObject o(*a, "pipeline.solver");
    o.get("max_iterations", c.solver.max_iterations);
    o.get("update_tolerance", c.solver.update_tolerance);
    o.get("max_step_halvings", c.solver.max_step_halvings);
    o.get("covariance_mode", c.solver.covariance_mode);
    o.get("fallback_position_sigma_m", c.solver.fallback_position_sigma_m);
    o.get("fallback_heading_sigma_rad", c.solver.fallback_heading_sigma_rad);
    o.finish();
  }
  if (const json* a = root.child("lane_model")) {
    StrictObject o(*a, "pipeline.lane_model");
    o.get("min_fit_features", c.lane_model.min_fit_features);
    o.get("min_fit_span_m", c.lane_model.min_fit_span_m);
    o.get("trim_threshold", c.lane_model.trim_threshold);
    o.get("max_trim_iterations", c.lane_model.max_trim_iterations);
    o.get("max_trim_fraction", c.lane_model.max_trim_fraction);
    o.get("min_feature_weight", c.lane_model.min_feature_weight);
    o.get("lateral_gate_fraction", c.lane_model.lateral_gate_fraction);
    o.get("near_range_m", c.lane_model.near_range_m);
    o.get("cluster_radius_m", c.lane_model.cluster_radius_m);
    o.get("min_cluster_size", c.lane_model.min_cluster_size);
    o.get("cluster_min_confidence", c.lane_model.cluster_min_confidence);
    o.get("assumed_lane_width_m", c.lane_model.assumed_lane_width_m);
    o.get("process_sigma_y0_m", c.lane_model.process_sigma_y0_m);
    o.get("process_sigma_theta0_rad", c.lane_model.process_sigma_theta0_rad);
    o.get("process_sigma_c0", c.lane_model.process_sigma_c0);
    o.get("process_sigma_c1", c.lane_model.process_sigma_c1);
    o.get("init_sigma_y0_m", c.lane_model.init_sigma_y0_m);
    o.get("init_sigma_theta0_rad", c.lane_model.init_sigma_theta0_rad);
    o.get("init_sigma_c0", c.lane_model.init_sigma_c0);
    o.get("init_sigma_c1", c.lane_model.init_sigma_c1);
    o.get("expire_after_frames", c.lane_model.expire_after_frames);
    o.get("spawn_gate_m", c.lane_model.spawn_gate_m);
    o.get("merge_gate_m", c.lane_model.merge_gate_m);
    o.get("horizon_m", c.lane_model.horizon_m);
    o.finish();
  }
  if (const json* a = root.child("evaluation")) {
    StrictObject o(*a, "pipeline.evaluation");
    o.get("sample_step_m", c.evaluation.sample_step_m);
    o.get("max_distance_m", c.evaluation.max_distance_m);
    o.get("match_gate_m", c.evaluation.match_gate_m);
    o.finish();
  }
  root.finish();

  if (c.solver.covariance_mode != "marginal" && c.solver.covariance_mode != "diagonal") {
    throw ConfigError("pipeline.solver.covariance_mode must be 'marginal' or 'diagonal'");
  }
  if (c.graph.pose_window < 1) {
    throw ConfigError("pipeline.graph.pose_window must be >= 1");
  }
  return c;
}

}  // namespace lanefusion
