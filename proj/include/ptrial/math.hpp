#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "ptrial/errors.hpp"

namespace ptrial {

// Compensated (Kahan-Neumaier) accumulator. Long weighted sums over
// simulated datasets must not drift at the 1e-12 level.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double mean(std::span<const double> x) {
  KahanSum s;
  for (double v : x) s.add(v);
  return x.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : s.value() / static_cast<double>(x.size());
}

// Unbiased sample variance, 1/(m-1). Requires m >= 2.
inline double sample_variance(std::span<const double> x) {
  const std::size_t m = x.size();
  double mu = mean(x);
  KahanSum s;
  for (double v : x) s.add((v - mu) * (v - mu));
  return s.value() / static_cast<double>(m - 1);
}

// Unbiased sample covariance, 1/(m-1). Requires m >= 2.
inline double sample_covariance(std::span<const double> x,
                                std::span<const double> y) {
  const std::size_t m = x.size();
  double mx = mean(x);
  double my = mean(y);
  KahanSum s;
  for (std::size_t i = 0; i < m; ++i) s.add((x[i] - mx) * (y[i] - my));
  return s.value() / static_cast<double>(m - 1);
}

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace detail {

// Rational approximation for the inverse standard normal CDF
// (Acklam's method), |relative error| < 1.2e-9 over (0,1).
inline double norm_quantile_approx(double p) {
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

// Inverse standard normal CDF, refined with Halley steps on the exact
// erfc-based CDF to full double precision (well below 1e-9).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ValueError("normal_quantile: p must lie in [0, 1]");
  }
  double x = detail::norm_quantile_approx(p);
  for (int it = 0; it < 2; ++it) {
    double e = normal_cdf(x) - p;
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (pdf <= 0.0) break;
    double u = e / pdf;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

}  // namespace ptrial
