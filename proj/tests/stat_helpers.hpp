#pragma once
// Small goodness-of-fit helpers shared by the tests and the acceptance run.
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace testutil {

// Asymptotic Kolmogorov tail P(K > x) with the Stephens small-n correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double x = (sn + 0.12 + 0.11 / sn) * d;
  if (x < 1e-3) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

inline double ks_stat(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

inline double ks_test(const std::vector<double>& x, const std::function<double(double)>& cdf) {
  return ks_pvalue(ks_stat(x, cdf), x.size());
}

// two-sample version
inline double ks_test2(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return ks_pvalue(d, static_cast<std::size_t>(na * nb / (na + nb)));
}

// Pearson chi-square p-value for observed counts against expected counts.
inline double chisq_pvalue(const std::vector<double>& obs, const std::vector<double>& expct, int lost_df = 1) {
  double s = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) s += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
  const int df = static_cast<int>(obs.size()) - lost_df;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), s));
}

}  // namespace testutil
