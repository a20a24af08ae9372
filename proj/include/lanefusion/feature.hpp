#pragma once

#include <string>

#include "lanefusion/geometry.hpp"

namespace lanefusion {

/// Generic lane feature, the common currency of all fusion inputs and of
/// the fused output: a pose on (or near) a lane marking, a confidence in
/// [0,1] and a 3x3 covariance over (x, y, theta).
struct LaneFeature {
  Pose2 pose;
  double confidence = 0.0;
  Mat3 covariance = Mat3::Identity();
};

/// Structural validity: finite pose, confidence in [0,1], covariance
/// symmetric PSD. Writes a short reason to `why` when provided.
bool is_valid_lane_feature(const LaneFeature& f, std::string* why = nullptr);

/// Vehicle motion over one time step.
struct ControlVector {
  double yaw_rate = 0.0;  ///< [rad/s]
  double speed = 0.0;     ///< [m/s], >= 0
  double dt = 0.0;        ///< [s], > 0
};

bool is_valid_control(const ControlVector& u);

/// Relative pose of the vehicle after applying `u` under a constant
/// turn-rate unicycle model.
Pose2 unicycle_step(const ControlVector& u);

}  // namespace lanefusion
