#pragma once
// Draws from N(mu, sigma^2) restricted to (lo, hi].
#include <cmath>
#include <random>

#include "errors.hpp"
#include "normal.hpp"

namespace bvsgcr {

namespace detail {

// Standard normal on (a, b] with 0 <= a < b (b may be +inf).
template <class Rng>
double trunc_std_upper(double a, double b, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double w = b - a;
  // Narrow interval: uniform proposal, density ratio exp(-(x^2 - a^2)/2).
  if (w < 0.5 / std::max(a, 1.0)) {
    for (;;) {
      const double x = a + w * unif(rng);
      if (std::log(unif(rng)) <= -0.5 * (x - a) * (x + a)) return x;
    }
  }
  if (a < 5.0) {
    // inverse cdf on the survival scale
    const double sa = norm_sf(a), sb = norm_sf(b);
    const double s = sb + (sa - sb) * unif(rng);
    return norm_quantile_sf(s);
  }
  // Robert (1995) translated-exponential rejection.
  const double lam = 0.5 * (a + std::sqrt(a * a + 4.0));
  std::exponential_distribution<double> ex(lam);
  for (;;) {
    const double x = a + ex(rng);
    if (x > b) continue;
    const double d = x - lam;
    if (std::log(unif(rng)) <= -0.5 * d * d) return x;
  }
}

// Standard normal on (a, b] with a < 0 < b.
template <class Rng>
double trunc_std_straddle(double a, double b, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double w = b - a;
  if (w < 2.5) {
    for (;;) {
      const double x = a + w * unif(rng);
      if (std::log(unif(rng)) <= -0.5 * x * x) return x;
    }
  }
  std::normal_distribution<double> nd;
  for (;;) {
    const double x = nd(rng);
    if (x > a && x <= b) return x;
  }
}

}  // namespace detail

template <class Rng>
double sample_truncated_normal(double mu, double sigma, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw ContractViolation("truncated normal: empty interval");
  if (!(sigma > 0.0)) throw ContractViolation("truncated normal: sigma must be positive");
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  double z;
  if (a == -kInf && b == kInf) {
    std::normal_distribution<double> nd;
    z = nd(rng);
  } else if (a >= 0.0) {
    z = detail::trunc_std_upper(a, b, rng);
  } else if (b <= 0.0) {
    z = -detail::trunc_std_upper(-b, -a, rng);
  } else {
    z = detail::trunc_std_straddle(a, b, rng);
  }
  double x = mu + sigma * z;
  // rounding in the affine map can land on the excluded endpoint
  if (x <= lo) x = std::nextafter(lo, kInf);
  if (x > hi) x = hi;
  return x;
}

}  // namespace bvsgcr
