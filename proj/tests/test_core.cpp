#include <doctest.h>

#include <cmath>
#include <random>

#include "ltrcsimex/types.hpp"

using namespace ltrcsimex;

TEST_CASE("additive_survivor basic values") {
  CHECK(additive_survivor(0.0, 5.0, 0.0) == 1.0);
  CHECK(additive_survivor(0.0, -3.0, 0.0) == 1.0);
  CHECK(additive_survivor(1.0, 0.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("additive_survivor with integrated sqrt baseline") {
  // Baseline hazard 0.5*sqrt(u): cumulative at t=1 is 1/3, checked by
  // midpoint quadrature before asserting the survivor value.
  const int m = 200000;
  double quad = 0.0;
  for (int k = 0; k < m; ++k) {
    double u = (k + 0.5) / m;
    quad += 0.5 * std::sqrt(u) / m;
  }
  CHECK(quad == doctest::Approx(1.0 / 3.0).epsilon(1e-8));
  CHECK(additive_survivor(1.0, 1.0, 1.0 / 3.0) ==
        doctest::Approx(std::exp(-4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("additive_survivor clamps negative total hazard") {
  CHECK(additive_survivor(2.0, -1.0, 0.5) == 1.0);
  CHECK_THROWS_AS(additive_survivor(1.0, std::nan(""), 0.0), InvalidInputError);
  CHECK_THROWS_AS(additive_survivor(-1.0, 0.0, 0.0), InvalidInputError);
}

TEST_CASE("at_risk window") {
  SubjectRecord s;
  s.a = 1.0;
  s.y = 3.0;
  CHECK(at_risk(s, 2.0) == 1);
  CHECK(at_risk(s, 0.5) == 0);
  CHECK(at_risk(s, 3.0) == 1);
  CHECK(at_risk(s, 1.0) == 1);
  CHECK(at_risk(s, 3.0001) == 0);
}

TEST_CASE("counting process") {
  SubjectRecord s;
  s.y = 2.0;
  s.delta = 1;
  CHECK(counting(s, 3.0) == 1);
  CHECK(counting(s, 1.0) == 0);
  s.delta = 0;
  CHECK(counting(s, 3.0) == 0);
}

TEST_CASE("at_risk is the indicator of [a, y], counting nondecreasing") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> ud(0.0, 5.0);
  for (int rep = 0; rep < 50; ++rep) {
    SubjectRecord s;
    double u1 = ud(eng), u2 = ud(eng);
    s.a = std::min(u1, u2);
    s.y = std::max(u1, u2);
    s.delta = rep % 2;
    int prev = 0;
    for (double t = 0.0; t <= 6.0; t += 0.05) {
      CHECK(at_risk(s, t) == ((s.a <= t && t <= s.y) ? 1 : 0));
      int c = counting(s, t);
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("additive_survivor nonincreasing in t for eta >= 0") {
  double prev = 1.0;
  for (double t = 0.0; t <= 4.0; t += 0.1) {
    double s = additive_survivor(t, 0.7, 0.3 * t);  // nondecreasing baseline
    CHECK(s <= prev + 1e-15);
    prev = s;
  }
}

TEST_CASE("StepFunction evaluation is right-continuous") {
  StepFunction f({1.0, 2.0, 3.0}, {0.5, 1.5, 1.5});
  CHECK(f(0.999) == 0.0);
  CHECK(f(1.0) == 0.5);
  CHECK(f(1.5) == 0.5);
  CHECK(f(2.0) == 1.5);
  CHECK(f(10.0) == 1.5);
  CHECK_THROWS_AS(StepFunction({2.0, 1.0}, {0.1, 0.2}), InvalidInputError);
  CHECK_THROWS_AS(StepFunction({1.0}, {0.1, 0.2}), InvalidInputError);
}

TEST_CASE("SubjectRecord and Dataset invariants") {
  SubjectRecord s;
  s.a = 2.0;
  s.y = 1.0;
  CHECK_THROWS_AS(s.validate(), InvalidInputError);
  s.a = 0.5;
  s.delta = 2;
  CHECK_THROWS_AS(s.validate(), InvalidInputError);
  s.delta = 1;
  CHECK_NOTHROW(s.validate());

  Dataset d;
  CHECK_THROWS_AS(d.validate(), InvalidInputError);
  d.p_x = 1;
  d.subjects.push_back(s);  // w has length 0, not 1
  CHECK_THROWS_AS(d.validate(), InvalidInputError);
}
