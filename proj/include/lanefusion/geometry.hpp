#pragma once

#include <optional>

#include <Eigen/Core>

namespace lanefusion {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Planar pose in a right-handed vehicle coordinate system:
/// x forward (driving direction), y to the left, heading measured
/// counter-clockwise from the x-axis in radians.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Wraps an angle into (-pi, pi]. Throws std::invalid_argument for
/// non-finite input.
double normalize_angle(double a);

/// Composition a (+) b: b expressed in a's parent frame.
/// Identity element is (0,0,0); associative.
Pose2 pose_compose(const Pose2& a, const Pose2& b);

/// Relative pose a^-1 (+) b, i.e. b seen from a. Satisfies
/// pose_compose(a, pose_between(a, b)) == b.
Pose2 pose_between(const Pose2& a, const Pose2& b);

Pose2 pose_inverse(const Pose2& a);

/// Componentwise residual z - zhat with the angle wrapped.
Vec3 pose_residual(const Pose2& z, const Pose2& zhat);

/// Inverts a covariance matrix into an information matrix.
/// Returns nullopt when the matrix is not symmetric, not positive
/// definite, or its condition number exceeds max_condition. Degenerate
/// sensor covariances are rejected here instead of being regularized.
std::optional<Mat3> invert_covariance(const Mat3& cov, double max_condition = 1e12);

bool is_covariance_psd(const Mat3& cov, double sym_tol = 1e-9);

/// First-order covariance of the composed relative pose z1 (+) z2 where
/// z1 carries cov1 and z2 carries cov2 (both additive in their own
/// parameterization). Used when bridging odometry edges.
Mat3 compose_relative_covariance(const Pose2& z1, const Mat3& cov1, const Pose2& z2,
                                 const Mat3& cov2);

}  // namespace lanefusion
