#pragma once
// Standard normal helpers with tail-safe variants.
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace bvsgcr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double norm_logpdf(double x) { return -0.5 * x * x - 0.5 * kLog2Pi; }

// Phi(x); erfc keeps full relative accuracy in the lower tail.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }
// 1 - Phi(x) without cancellation.
inline double norm_sf(double x) { return norm_cdf(-x); }

// log Phi(x); asymptotic series once erfc underflows.
inline double norm_logcdf(double x) {
  if (x > -30.0) return std::log(norm_cdf(x));
  const double x2 = x * x;
  double s = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return norm_logpdf(x) - std::log(-x) + std::log(s);
}

// Phi^{-1}(p) for p in [0,1].
inline double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}
// x with 1 - Phi(x) = q; used when the cdf is close to one.
inline double norm_quantile_sf(double q) { return -norm_quantile(q); }

// Phi(b) - Phi(a) for a <= b, evaluated on the side that avoids cancellation.
inline double norm_interval(double a, double b) {
  if (a >= b) return 0.0;
  if (a > 0.0) return norm_sf(a) - norm_sf(b);
  return norm_cdf(b) - norm_cdf(a);
}

// log(Phi(b) - Phi(a)), stable far into either tail.
inline double norm_log_interval(double a, double b) {
  if (a >= b) return -kInf;
  if (a > 0.0) return norm_log_interval(-b, -a);
  // now a <= 0; the upper tail of the interval carries little mass
  const double la = norm_logcdf(a);
  const double lb = norm_logcdf(b);
  if (a == -kInf) return lb;
  const double d = la - lb;
  if (d >= 0.0) return -kInf;
  return lb + std::log(-std::expm1(d));
}

}  // namespace bvsgcr
