#pragma once

namespace lanefusion {

/// Small-heading clothoid approximated by the third-order polynomial
///   y(x) = y0 + theta0*x + c0*x^2/2 + c1*x^3/6
/// valid on [x_min, x_max]. The approximation holds for headings up to
/// 15 degrees; construction rejects parameters beyond that bound.
struct Clothoid {
  double y0 = 0.0;     ///< lateral offset at x = 0 [m]
  double theta0 = 0.0; ///< heading at x = 0 [rad]
  double c0 = 0.0;     ///< curvature at x = 0 [1/m]
  double c1 = 0.0;     ///< curvature rate [1/m^2]
  double x_min = 0.0;
  double x_max = 0.0;
};

/// Heading bound of the polynomial approximation (15 degrees).
inline constexpr double kClothoidMaxHeading = 0.2617993877991494;

/// Validating constructor; throws std::invalid_argument on x_min >= x_max
/// or |theta0| beyond the approximation bound.
Clothoid make_clothoid(double y0, double theta0, double c0, double c1, double x_min,
                       double x_max);

/// Lateral offset y(x). Throws std::out_of_range outside [x_min, x_max].
double clothoid_eval(const Clothoid& c, double x);

/// Heading theta(x) = theta0 + c0*x + c1*x^2/2 (derivative of y).
double clothoid_heading(const Clothoid& c, double x);

}  // namespace lanefusion
