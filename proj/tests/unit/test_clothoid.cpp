#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "lanefusion/clothoid.hpp"

using namespace lanefusion;

TEST_CASE("clothoid_eval known values") {
  const Clothoid straight = make_clothoid(0.0, 0.0, 0.0, 0.0, 0.0, 120.0);
  CHECK(clothoid_eval(straight, 50.0) == 0.0);

  const Clothoid offset = make_clothoid(1.75, 0.0, 0.0, 0.0, 0.0, 120.0);
  CHECK(clothoid_eval(offset, 100.0) == doctest::Approx(1.75));

  const Clothoid curved = make_clothoid(0.0, 0.01, 1e-4, 0.0, 0.0, 120.0);
  CHECK(clothoid_eval(curved, 100.0) == doctest::Approx(1.5));  // 0.01*100 + 1e-4*100^2/2
}

TEST_CASE("clothoid_heading known values") {
  const Clothoid straight = make_clothoid(0.0, 0.0, 0.0, 0.0, 0.0, 120.0);
  CHECK(clothoid_heading(straight, 37.0) == 0.0);

  const Clothoid curved = make_clothoid(0.0, 0.0, 1e-3, 0.0, 0.0, 120.0);
  CHECK(clothoid_heading(curved, 50.0) == doctest::Approx(0.05));
}

TEST_CASE("clothoid_heading equals the numerical derivative of clothoid_eval") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Clothoid c = make_clothoid(4.0 * u(rng) - 2.0, 0.2 * u(rng) - 0.1,
                                     2e-3 * u(rng) - 1e-3, 2e-5 * u(rng) - 1e-5, 0.0, 130.0);
    const double x = 1.0 + 128.0 * u(rng);
    const double h = 1e-4;
    const double fd = (clothoid_eval(c, x + h) - clothoid_eval(c, x - h)) / (2.0 * h);
    const double analytic = clothoid_heading(c, x);
    CHECK(std::abs(fd - analytic) < 1e-5 * std::max(1.0, std::abs(analytic)));
    CHECK(std::abs(fd - analytic) < 1e-6 + 1e-5 * std::abs(analytic));
  }
}

TEST_CASE("clothoid validity interval is enforced") {
  const Clothoid c = make_clothoid(0.0, 0.0, 0.0, 0.0, 0.0, 90.0);
  CHECK_THROWS_AS(clothoid_eval(c, -1.0), std::out_of_range);
  CHECK_THROWS_AS(clothoid_eval(c, 90.5), std::out_of_range);
  CHECK_THROWS_AS(clothoid_heading(c, 1000.0), std::out_of_range);
}

TEST_CASE("make_clothoid rejects invalid parameters") {
  CHECK_THROWS_AS(make_clothoid(0, 0, 0, 0, 10.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_clothoid(0, 0, 0, 0, 20.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_clothoid(0, 0.5, 0, 0, 0.0, 10.0), std::invalid_argument);  // > 15 deg
  CHECK_THROWS_AS(make_clothoid(std::nan(""), 0, 0, 0, 0.0, 10.0), std::invalid_argument);
  CHECK_NOTHROW(make_clothoid(0, 0.26, 0, 0, 0.0, 10.0));
}
