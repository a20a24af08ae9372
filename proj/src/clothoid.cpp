#include "lanefusion/clothoid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lanefusion {

Clothoid make_clothoid(double y0, double theta0, double c0, double c1, double x_min,
                       double x_max) {
  if (!(std::isfinite(y0) && std::isfinite(theta0) && std::isfinite(c0) && std::isfinite(c1) &&
        std::isfinite(x_min) && std::isfinite(x_max))) {
    throw std::invalid_argument("make_clothoid: non-finite parameter");
  }
  if (!(x_min < x_max)) {
    throw std::invalid_argument("make_clothoid: requires x_min < x_max");
  }
  if (std::abs(theta0) > kClothoidMaxHeading) {
    throw std::invalid_argument("make_clothoid: |theta0| exceeds small-heading bound, got " +
                                std::to_string(theta0));
  }
  return {y0, theta0, c0, c1, x_min, x_max};
}

static void check_range(const Clothoid& c, double x) {
  if (!(x >= c.x_min && x <= c.x_max)) {
    throw std::out_of_range("clothoid: x = " + std::to_string(x) + " outside [" +
                            std::to_string(c.x_min) + ", " + std::to_string(c.x_max) + "]");
  }
}

double clothoid_eval(const Clothoid& c, double x) {
  check_range(c, x);
  return c.y0 + c.theta0 * x + 0.5 * c.c0 * x * x + c.c1 * x * x * x / 6.0;
}

double clothoid_heading(const Clothoid& c, double x) {
  check_range(c, x);
  return c.theta0 + c.c0 * x + 0.5 * c.c1 * x * x;
}

}  // namespace lanefusion
