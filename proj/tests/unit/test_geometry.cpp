#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "lanefusion/feature.hpp"
#include "lanefusion/geometry.hpp"

using namespace lanefusion;

TEST_CASE("normalize_angle basics") {
  CHECK(normalize_angle(0.0) == 0.0);
  CHECK(normalize_angle(3.0 * M_PI) == doctest::Approx(M_PI).epsilon(1e-15));
  CHECK(normalize_angle(-M_PI) == doctest::Approx(M_PI));  // open interval at -pi
  CHECK(normalize_angle(M_PI) == doctest::Approx(M_PI));
  CHECK_THROWS_AS(normalize_angle(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(normalize_angle(INFINITY), std::invalid_argument);
}

TEST_CASE("normalize_angle stays in (-pi, pi] on random input") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng);
    const double r = normalize_angle(a);
    CHECK(r > -M_PI);
    CHECK(r <= M_PI);
    // congruent mod 2pi
    CHECK(std::remainder(r - a, 2.0 * M_PI) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("pose_compose identity and quarter turn") {
  const Pose2 b{5.0, 1.0, 0.1};
  const Pose2 r = pose_compose(Pose2{}, b);
  CHECK(r.x == doctest::Approx(5.0));
  CHECK(r.y == doctest::Approx(1.0));
  CHECK(r.theta == doctest::Approx(0.1));

  const Pose2 q = pose_compose(Pose2{1.0, 0.0, M_PI_2}, Pose2{1.0, 0.0, 0.0});
  CHECK(q.x == doctest::Approx(1.0));
  CHECK(q.y == doctest::Approx(1.0));
  CHECK(q.theta == doctest::Approx(M_PI_2));
}

TEST_CASE("pose_between basics") {
  const Pose2 r = pose_between(Pose2{}, Pose2{2.0, 3.0, 0.2});
  CHECK(r.x == doctest::Approx(2.0));
  CHECK(r.y == doctest::Approx(3.0));
  CHECK(r.theta == doctest::Approx(0.2));

  const Pose2 p{4.0, -2.0, 1.1};
  const Pose2 self = pose_between(p, p);
  CHECK(self.x == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(self.y == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(self.theta == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("compose/between round trip on random pairs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> a(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 p{u(rng), u(rng), normalize_angle(a(rng))};
    const Pose2 q{u(rng), u(rng), normalize_angle(a(rng))};
    const Pose2 r = pose_between(p, pose_compose(p, q));
    CHECK(std::abs(r.x - q.x) < 1e-12);
    CHECK(std::abs(r.y - q.y) < 1e-12);
    CHECK(std::abs(normalize_angle(r.theta - q.theta)) < 1e-12);
  }
}

TEST_CASE("pose_compose associativity on random triples") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> a(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    const Pose2 p{u(rng), u(rng), a(rng)};
    const Pose2 q{u(rng), u(rng), a(rng)};
    const Pose2 r{u(rng), u(rng), a(rng)};
    const Pose2 left = pose_compose(pose_compose(p, q), r);
    const Pose2 right = pose_compose(p, pose_compose(q, r));
    CHECK(std::abs(left.x - right.x) < 1e-10);
    CHECK(std::abs(left.y - right.y) < 1e-10);
    CHECK(std::abs(normalize_angle(left.theta - right.theta)) < 1e-10);
  }
}

TEST_CASE("invert_covariance rejects degenerate matrices") {
  Mat3 ok = Mat3::Identity() * 0.04;
  CHECK(invert_covariance(ok).has_value());

  Mat3 asym = ok;
  asym(0, 1) = 0.5;
  CHECK_FALSE(invert_covariance(asym).has_value());

  Mat3 indef = Mat3::Identity();
  indef(2, 2) = -1.0;
  CHECK_FALSE(invert_covariance(indef).has_value());

  Mat3 illcond = Mat3::Identity();
  illcond(0, 0) = 1e14;
  CHECK_FALSE(invert_covariance(illcond).has_value());

  const Mat3 info = *invert_covariance(ok);
  CHECK(info(0, 0) == doctest::Approx(25.0));
}

TEST_CASE("compose_relative_covariance matches Monte-Carlo propagation") {
  const Pose2 z1{2.0, 0.3, 0.4};
  const Pose2 z2{1.5, -0.2, -0.1};
  Mat3 c1 = Mat3::Zero();
  c1.diagonal() << 0.02, 0.03, 0.001;
  Mat3 c2 = Mat3::Zero();
  c2.diagonal() << 0.01, 0.02, 0.002;
  const Mat3 analytic = compose_relative_covariance(z1, c1, z2, c2);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Mat3 second = Mat3::Zero();
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Pose2 z1n{z1.x + g(rng) * std::sqrt(c1(0, 0)), z1.y + g(rng) * std::sqrt(c1(1, 1)),
                    z1.theta + g(rng) * std::sqrt(c1(2, 2))};
    const Pose2 z2n{z2.x + g(rng) * std::sqrt(c2(0, 0)), z2.y + g(rng) * std::sqrt(c2(1, 1)),
                    z2.theta + g(rng) * std::sqrt(c2(2, 2))};
    const Pose2 c = pose_compose(z1n, z2n);
    const Pose2 c0 = pose_compose(z1, z2);
    const Eigen::Vector3d d(c.x - c0.x, c.y - c0.y, normalize_angle(c.theta - c0.theta));
    mean += d;
    second += d * d.transpose();
  }
  mean /= n;
  const Mat3 sample = second / n - mean * mean.transpose();
  CHECK((sample - analytic).cwiseAbs().maxCoeff() < 0.05 * analytic.cwiseAbs().maxCoeff());
}

TEST_CASE("unicycle_step straight and turning") {
  const Pose2 straight = unicycle_step(ControlVector{0.0, 30.0, 0.1});
  CHECK(straight.x == doctest::Approx(3.0));
  CHECK(straight.y == doctest::Approx(0.0));
  CHECK(straight.theta == doctest::Approx(0.0));

  // quarter circle: yaw rate pi/2 over 1 s at speed pi/2 -> radius 1
  const Pose2 turn = unicycle_step(ControlVector{M_PI_2, M_PI_2, 1.0});
  CHECK(turn.x == doctest::Approx(1.0));
  CHECK(turn.y == doctest::Approx(1.0));
  CHECK(turn.theta == doctest::Approx(M_PI_2));
}
