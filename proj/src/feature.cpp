#include "lanefusion/feature.hpp"

#include <cmath>

namespace lanefusion {

bool is_valid_lane_feature(const LaneFeature& f, std::string* why) {
  if (!(std::isfinite(f.pose.x) && std::isfinite(f.pose.y) && std::isfinite(f.pose.theta))) {
    if (why) *why = "non-finite pose";
    return false;
  }
  if (!(f.confidence >= 0.0 && f.confidence <= 1.0)) {
    if (why) *why = "confidence outside [0,1]";
    return false;
  }
  if (!is_covariance_psd(f.covariance)) {
    if (why) *why = "covariance not symmetric PSD";
    return false;
  }
  return true;
}

bool is_valid_control(const ControlVector& u) {
  return std::isfinite(u.yaw_rate) && std::isfinite(u.speed) && std::isfinite(u.dt) &&
         u.dt > 0.0 && u.speed >= 0.0;
}

Pose2 unicycle_step(const ControlVector& u) {
  const double dtheta = u.yaw_rate * u.dt;
  if (std::abs(u.yaw_rate) < 1e-9) {
    return {u.speed * u.dt, 0.0, normalize_angle(dtheta)};
  }
  const double r = u.speed / u.yaw_rate;
  return {r * std::sin(dtheta), r * (1.0 - std::cos(dtheta)), normalize_angle(dtheta)};
}

}  // namespace lanefusion
