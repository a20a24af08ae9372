#include "lanefusion/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace lanefusion {

double normalize_angle(double a) {
  if (!std::isfinite(a)) {
    throw std::invalid_argument("normalize_angle: non-finite angle");
  }
  double r = std::remainder(a, 2.0 * M_PI);  // [-pi, pi]
  if (r <= -M_PI) {
    r = M_PI;
  }
  return r;
}

Pose2 pose_compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, normalize_angle(a.theta + b.theta)};
}

Pose2 pose_between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy, normalize_angle(b.theta - a.theta)};
}

Pose2 pose_inverse(const Pose2& a) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {-(c * a.x + s * a.y), s * a.x - c * a.y, normalize_angle(-a.theta)};
}

Vec3 pose_residual(const Pose2& z, const Pose2& zhat) {
  return {z.x - zhat.x, z.y - zhat.y, normalize_angle(z.theta - zhat.theta)};
}

bool is_covariance_psd(const Mat3& cov, double sym_tol) {
  if (!cov.allFinite()) {
    return false;
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > sym_tol * (1.0 + cov.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  return es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
}

std::optional<Mat3> invert_covariance(const Mat3& cov, double max_condition) {
  if (!cov.allFinite()) {
    return std::nullopt;
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    return std::nullopt;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > max_condition) {
    return std::nullopt;
  }
  const Mat3 info = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose();
  return Mat3(0.5 * (info + info.transpose()));
}

Mat3 compose_relative_covariance(const Pose2& z1, const Mat3& cov1, const Pose2& z2,
                                 const Mat3& cov2) {
  const double c = std::cos(z1.theta);
  const double s = std::sin(z1.theta);
  // d(z1 (+) z2) / dz1 and / dz2
  Mat3 a = Mat3::Identity();
  a(0, 2) = -s * z2.x - c * z2.y;
  a(1, 2) = c * z2.x - s * z2.y;
  Mat3 b = Mat3::Zero();
  b(0, 0) = c;
  b(0, 1) = -s;
  b(1, 0) = s;
  b(1, 1) = c;
  b(2, 2) = 1.0;
  return a * cov1 * a.transpose() + b * cov2 * b.transpose();
}

}  // namespace lanefusion
