#include "lanefusion/sensor_ingest.hpp"

#include <algorithm>
#include <cmath>

namespace lanefusion {

namespace {

constexpr double kSmcSampleSpacing = 2.0;

void sample_one_side(const Clothoid& c, const SmcLaneReport& r, const IngestConfig& cfg,
                     std::vector<LaneFeature>& out) {
  if (!(c.x_min < c.x_max) || r.detection_range_m <= 0.0) {
    return;
  }
  const double x_end = std::min(r.detection_range_m, c.x_max);
  const Eigen::Vector4d param_var(r.sigma_y0 * r.sigma_y0, r.sigma_theta0 * r.sigma_theta0,
                                  r.sigma_c0 * r.sigma_c0, r.sigma_c1 * r.sigma_c1);
  for (double x = std::max(0.0, c.x_min); x <= x_end + 1e-9; x += kSmcSampleSpacing) {
    LaneFeature f;
    f.pose.x = x;
    f.pose.y = clothoid_eval(c, x);
    f.pose.theta = clothoid_heading(c, x);
    f.confidence = r.confidence;

    // first-order propagation of (y0, theta0, c0, c1) sigmas
    const Eigen::Vector4d gy(1.0, x, 0.5 * x * x, x * x * x / 6.0);
    const Eigen::Vector4d gt(0.0, 1.0, x, 0.5 * x * x);
    Mat3 cov = Mat3::Zero();
    cov(0, 0) = cfg.smc_longitudinal_sigma_m * cfg.smc_longitudinal_sigma_m;
    cov(1, 1) = gy.dot(param_var.asDiagonal() * gy);
    cov(2, 2) = gt.dot(param_var.asDiagonal() * gt);
    cov(1, 2) = cov(2, 1) = gy.dot(param_var.asDiagonal() * gt);
    f.covariance = cov;
    out.push_back(f);
  }
}

}  // namespace

std::vector<LaneFeature> sample_smc_features(const SmcLaneReport& r, const IngestConfig& cfg) {
  std::vector<LaneFeature> out;
  if (r.left) {
    sample_one_side(*r.left, r, cfg, out);
  }
  if (r.right) {
    sample_one_side(*r.right, r, cfg, out);
  }
  return out;
}

HrcIngestResult ingest_hrc_features(const HrcFeatureReport& r) {
  HrcIngestResult res;
  res.features.reserve(r.features.size());
  for (const LaneFeature& f : r.features) {
    if (f.pose.x > r.max_range_m) {
      ++res.clipped;
      continue;
    }
    if (!is_valid_lane_feature(f)) {
      ++res.dropped;
      continue;
    }
    res.features.push_back(f);
  }
  return res;
}

std::optional<std::pair<LaneFeature, LaneFeature>> object_to_features(const TrackedObject& o,
                                                                      double lane_width_m,
                                                                      const IngestConfig& cfg) {
  if (o.pose.x <= 0.0) {
    return std::nullopt;
  }
  const double half = 0.5 * lane_width_m;

  // Lateral driver-offset uncertainty, rotated into the vehicle frame.
  const double c = std::cos(o.pose.theta);
  const double s = std::sin(o.pose.theta);
  const double dv = cfg.driver_lateral_sigma_m * cfg.driver_lateral_sigma_m;
  Mat3 driver = Mat3::Zero();
  driver(0, 0) = s * s * dv;
  driver(0, 1) = driver(1, 0) = -s * c * dv;
  driver(1, 1) = c * c * dv;

  auto make = [&](double lateral) {
    LaneFeature f;
    f.pose = pose_compose(o.pose, Pose2{0.0, lateral, 0.0});
    f.confidence = cfg.object_feature_confidence;
    f.covariance = o.covariance + driver;
    return f;
  };
  return std::make_pair(make(half), make(-half));
}

double current_lane_width(const std::optional<SmcLaneReport>& smc, const IngestConfig& cfg) {
  if (!smc || !smc->left || !smc->right) {
    return cfg.default_lane_width_m;
  }
  const double w = smc->left->y0 - smc->right->y0;
  if (w < cfg.lane_width_min_m || w > cfg.lane_width_max_m) {
    return cfg.default_lane_width_m;
  }
  return w;
}

}  // namespace lanefusion
