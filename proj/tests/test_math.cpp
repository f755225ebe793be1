#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ptrial/math.hpp"
#include "ptrial/rng.hpp"

using namespace ptrial;

TEST_CASE("kahan summation keeps tiny terms") {
  KahanSum s;
  s.add(1.0);
  for (int i = 0; i < 1'000'000; ++i) s.add(1e-16);
  REQUIRE(s.value() == Catch::Approx(1.0 + 1e-10).epsilon(1e-12));
}

TEST_CASE("sample moments") {
  std::vector<double> x{1.0, 3.0};
  REQUIRE(mean(x) == 2.0);
  REQUIRE(sample_variance(x) == 2.0);
  std::vector<double> y{2.0, 4.0};
  REQUIRE(sample_covariance(x, y) == 2.0);
  std::vector<double> z{5.0, 1.0};
  REQUIRE(sample_covariance(x, z) == -4.0);
}

TEST_CASE("normal quantile matches reference values") {
  // Reference values computed with an independent implementation.
  REQUIRE(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(normal_quantile(0.975) == Catch::Approx(1.959963984540054).margin(1e-12));
  REQUIRE(normal_quantile(0.9) == Catch::Approx(1.2815515655446004).margin(1e-12));
  REQUIRE(normal_quantile(0.999) == Catch::Approx(3.090232306167813).margin(1e-12));
  REQUIRE(normal_quantile(1e-9) == Catch::Approx(-5.9978070150076865).margin(1e-11));
  REQUIRE(normal_quantile(0.025) == Catch::Approx(-1.9599639845400545).margin(1e-12));
  REQUIRE(normal_quantile(0.3) == Catch::Approx(-0.5244005127080409).margin(1e-12));
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p = 0.0005; p < 1.0; p += 0.0101) {
    REQUIRE(normal_cdf(normal_quantile(p)) == Catch::Approx(p).margin(1e-12));
  }
  REQUIRE_THROWS_AS(normal_quantile(-0.1), ValueError);
  REQUIRE_THROWS_AS(normal_quantile(1.5), ValueError);
}
