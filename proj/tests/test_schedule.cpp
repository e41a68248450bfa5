#include <doctest.h>

#include <cmath>

#include "htl/error.hpp"
#include "htl/schedule.hpp"

using namespace htl;

TEST_CASE("coverage with alpha -11, beta 1.76") {
  CHECK(coverage_at_ratio(0.5, -11.0, 1.76) == 1.0);
  CHECK(coverage_at_ratio(0.0, -11.0, 1.76) == 0.0);
  CHECK(coverage_at_ratio(1.0, -11.0, 1.76) == 0.0);
  // Hand evaluation away from the clamps: 1.76 - 11 * 0.04 = 1.32 -> 1; 1.76 - 11 * 0.1225 = 0.4125.
  CHECK(coverage_at_ratio(0.3, -11.0, 1.76) == 1.0);
  CHECK(coverage_at_ratio(0.15, -11.0, 1.76) == doctest::Approx(0.4125).epsilon(1e-12));
}

TEST_CASE("zero crossings and saturation boundaries") {
  const double zero = std::sqrt(1.76 / 11.0), sat = std::sqrt(0.76 / 11.0);
  for (double side : {-1.0, 1.0}) {
    CHECK(std::abs(coverage_at_ratio(0.5 + side * zero, -11.0, 1.76)) < 1e-12);
    CHECK(coverage_at_ratio(0.5 + side * (zero - 1e-6), -11.0, 1.76) > 0.0);
    CHECK(coverage_at_ratio(0.5 + side * (zero + 1e-6), -11.0, 1.76) == 0.0);
    CHECK(coverage_at_ratio(0.5 + side * (sat - 1e-6), -11.0, 1.76) == 1.0);
    CHECK(coverage_at_ratio(0.5 + side * (sat + 1e-6), -11.0, 1.76) < 1.0);
  }
}

TEST_CASE("integer steps: boundaries, symmetry, range") {
  for (std::int64_t total : {1, 2, 7, 100, 1001}) {
    ScheduleParams p;
    p.total_steps = total;
    CHECK(coverage(0, p) == 0.0);
    CHECK(coverage(total, p) == 0.0);
    if (total % 2 == 0) CHECK(coverage(total / 2, p) == 1.0);
    for (std::int64_t s = 0; s <= total; ++s) {
      CHECK(coverage(s, p) == coverage(total - s, p));
      CHECK(coverage(s, p) >= 0.0);
      CHECK(coverage(s, p) <= 1.0);
    }
  }
}

TEST_CASE("range holds for arbitrary parameters") {
  for (double a : {-30.0, -11.0, -1.0, 0.5, 4.0})
    for (double b : {0.01, 0.5, 1.76, 5.0})
      for (int k = 0; k <= 100; ++k) {
        const double v = coverage_at_ratio(k / 100.0, a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
}

TEST_CASE("invalid schedules") {
  ScheduleParams p;
  p.total_steps = 10;
  CHECK_THROWS_AS(coverage(-1, p), RangeError);
  CHECK_THROWS_AS(coverage(11, p), RangeError);
  p.total_steps = 0;
  CHECK_THROWS(p.validate());
  ScheduleParams vacuous;
  vacuous.beta = -0.5;
  CHECK_THROWS(vacuous.validate());
}
