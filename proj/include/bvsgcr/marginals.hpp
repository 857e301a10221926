#pragma once
// Marginal families F_k: cdf, survival, log-mass/density, normal scores and
// the latent intervals used for discrete data augmentation.
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "errors.hpp"
#include "normal.hpp"

namespace bvsgcr {

enum class Kind { Gaussian, BernoulliProbit, OrdinalProbit, BinomialLogit, NegBinomialLogit };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Gaussian: return "gaussian";
    case Kind::BernoulliProbit: return "binary";
    case Kind::OrdinalProbit: return "ordinal";
    case Kind::BinomialLogit: return "binomial";
    case Kind::NegBinomialLogit: return "negbin";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  if (s == "gaussian") return Kind::Gaussian;
  if (s == "binary" || s == "probit" || s == "bernoulli") return Kind::BernoulliProbit;
  if (s == "ordinal") return Kind::OrdinalProbit;
  if (s == "binomial") return Kind::BinomialLogit;
  if (s == "negbin" || s == "negative_binomial") return Kind::NegBinomialLogit;
  throw ConfigError("unknown family '" + s + "'");
}

// theta layout:
//   Gaussian          {variance}
//   OrdinalProbit     log-gaps eta_c = log(theta_c - theta_{c-1}), c = 2..C-1 (theta_1 = 0)
//   NegBinomialLogit  {dispersion}
//   others            {}
struct Family {
  Kind kind = Kind::Gaussian;
  std::vector<double> theta;
  int categories = 2;  // ordinal: C, observations coded 1..C
  int trials = 0;      // binomial: N

  static Family gaussian(double variance) { return {Kind::Gaussian, {variance}, 0, 0}; }
  static Family bernoulli() { return {Kind::BernoulliProbit, {}, 2, 0}; }
  static Family binomial(int n) { return {Kind::BinomialLogit, {}, 0, n}; }
  static Family negbin(double dispersion) { return {Kind::NegBinomialLogit, {dispersion}, 0, 0}; }
  // Equally spaced unit gaps by default.
  static Family ordinal(int c) { return {Kind::OrdinalProbit, std::vector<double>(std::max(c - 2, 0), 0.0), c, 0}; }
  static Family ordinal_from_cutpoints(const std::vector<double>& cp) {
    if (cp.empty() || cp[0] != 0.0) throw ParameterError("ordinal cut-points must start at 0");
    Family f{Kind::OrdinalProbit, {}, static_cast<int>(cp.size()) + 1, 0};
    for (std::size_t c = 1; c < cp.size(); ++c) {
      if (!(cp[c] > cp[c - 1])) throw ParameterError("ordinal cut-points must be strictly increasing");
      f.theta.push_back(std::log(cp[c] - cp[c - 1]));
    }
    return f;
  }

  bool discrete() const { return kind != Kind::Gaussian; }

  // theta_1..theta_{C-1} on the natural scale.
  std::vector<double> cutpoints() const {
    std::vector<double> cp{0.0};
    for (double g : theta) cp.push_back(cp.back() + std::exp(g));
    return cp;
  }

  long support_min() const { return kind == Kind::OrdinalProbit ? 1 : 0; }
  // -1 means unbounded
  long support_max() const {
    switch (kind) {
      case Kind::BernoulliProbit: return 1;
      case Kind::OrdinalProbit: return categories;
      case Kind::BinomialLogit: return trials;
      default: return -1;
    }
  }
};

inline void validate(const Family& f) {
  switch (f.kind) {
    case Kind::Gaussian:
      if (f.theta.size() != 1 || !(f.theta[0] > 0.0) || !std::isfinite(f.theta[0]))
        throw ParameterError("gaussian variance must be positive");
      break;
    case Kind::NegBinomialLogit:
      if (f.theta.size() != 1 || !(f.theta[0] > 0.0) || !std::isfinite(f.theta[0]))
        throw ParameterError("negative binomial dispersion must be positive");
      break;
    case Kind::OrdinalProbit:
      if (f.categories < 2 || f.theta.size() != static_cast<std::size_t>(f.categories - 2))
        throw ParameterError("ordinal family needs C-2 log-gaps");
      for (double g : f.theta)
        if (!std::isfinite(g)) throw ParameterError("ordinal cut-points must be strictly increasing");
      break;
    case Kind::BinomialLogit:
      if (f.trials < 1) throw ParameterError("binomial trial count must be >= 1");
      break;
    case Kind::BernoulliProbit: break;
  }
}

namespace detail {

// NB with r = theta and success probability p = (1+e^eta)/(2+e^eta); q = 1 - p.
inline void nb_probs(double eta, double& p, double& q) {
  if (eta > 0.0) {
    const double t = std::exp(-eta);
    q = t / (1.0 + 2.0 * t);
    p = (1.0 + t) / (1.0 + 2.0 * t);
  } else {
    const double e = std::exp(eta);
    q = 1.0 / (2.0 + e);
    p = (1.0 + e) / (2.0 + e);
  }
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// binomial success probability 1/(1+e^eta) and its complement
inline void binom_probs(double eta, double& pi, double& cpi) {
  if (eta > 0.0) {
    const double t = std::exp(-eta);
    pi = t / (1.0 + t);
    cpi = 1.0 / (1.0 + t);
  } else {
    const double e = std::exp(eta);
    pi = 1.0 / (1.0 + e);
    cpi = e / (1.0 + e);
  }
}

inline long as_count(double y) {
  if (!std::isfinite(y) || y != std::floor(y)) throw DataError("non-integer observation for a discrete family");
  return static_cast<long>(y);
}

}  // namespace detail

// P(Y <= y); defined for every integer y (0 below support, 1 above).
inline double cdf(const Family& f, double y, double eta) {
  validate(f);
  if (f.kind == Kind::Gaussian) return norm_cdf((y - eta) / std::sqrt(f.theta[0]));
  const long v = detail::as_count(y);
  if (v < f.support_min()) return 0.0;
  if (f.support_max() >= 0 && v >= f.support_max()) return 1.0;
  switch (f.kind) {
    case Kind::BernoulliProbit: return norm_cdf(-eta);
    case Kind::OrdinalProbit: return norm_cdf(f.cutpoints()[v - 1] - eta);
    case Kind::BinomialLogit: {
      double pi, cpi;
      detail::binom_probs(eta, pi, cpi);
      return boost::math::ibeta(static_cast<double>(f.trials - v), static_cast<double>(v + 1), cpi);
    }
    case Kind::NegBinomialLogit: {
      double p, q;
      detail::nb_probs(eta, p, q);
      return boost::math::ibeta(f.theta[0], static_cast<double>(v + 1), p);
    }
    default: break;
  }
  return 0.0;
}

// P(Y > y), computed directly rather than as 1 - cdf.
inline double sf(const Family& f, double y, double eta) {
  validate(f);
  if (f.kind == Kind::Gaussian) return norm_sf((y - eta) / std::sqrt(f.theta[0]));
  const long v = detail::as_count(y);
  if (v < f.support_min()) return 1.0;
  if (f.support_max() >= 0 && v >= f.support_max()) return 0.0;
  switch (f.kind) {
    case Kind::BernoulliProbit: return norm_cdf(eta);
    case Kind::OrdinalProbit: return norm_sf(f.cutpoints()[v - 1] - eta);
    case Kind::BinomialLogit: {
      double pi, cpi;
      detail::binom_probs(eta, pi, cpi);
      return boost::math::ibeta(static_cast<double>(v + 1), static_cast<double>(f.trials - v), pi);
    }
    case Kind::NegBinomialLogit: {
      double p, q;
      detail::nb_probs(eta, p, q);
      return boost::math::ibeta(static_cast<double>(v + 1), f.theta[0], q);
    }
    default: break;
  }
  return 0.0;
}

inline bool in_support(const Family& f, double y) {
  if (f.kind == Kind::Gaussian) return std::isfinite(y);
  if (!std::isfinite(y) || y != std::floor(y)) return false;
  if (y < f.support_min()) return false;
  return f.support_max() < 0 || y <= f.support_max();
}

inline double log_density(const Family& f, double y, double eta) {
  validate(f);
  if (f.kind == Kind::Gaussian) {
    const double v = f.theta[0];
    const double r = y - eta;
    return -0.5 * (kLog2Pi + std::log(v) + r * r / v);
  }
  if (!in_support(f, y)) return -kInf;
  const long c = static_cast<long>(y);
  switch (f.kind) {
    case Kind::BernoulliProbit: return c == 1 ? norm_logcdf(eta) : norm_logcdf(-eta);
    case Kind::OrdinalProbit: {
      const auto cp = f.cutpoints();
      const double lo = c == 1 ? -kInf : cp[c - 2] - eta;
      const double hi = c == f.categories ? kInf : cp[c - 1] - eta;
      return norm_log_interval(lo, hi);
    }
    case Kind::BinomialLogit: {
      const double n = f.trials;
      const double lchoose = std::lgamma(n + 1) - std::lgamma(y + 1) - std::lgamma(n - y + 1);
      // log pi = -softplus(eta), log(1-pi) = eta - softplus(eta)
      return lchoose - y * detail::softplus(eta) + (n - y) * (eta - detail::softplus(eta));
    }
    case Kind::NegBinomialLogit: {
      const double r = f.theta[0];
      double p, q;
      detail::nb_probs(eta, p, q);
      return std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1) + r * std::log(p) + y * std::log(q);
    }
    default: break;
  }
  return -kInf;
}

// z = Phi^{-1}(F(y)) for continuous margins.
inline double normal_score(const Family& f, double y, double eta) {
  if (f.kind != Kind::Gaussian) throw ContractViolation("normal_score needs a continuous family");
  validate(f);
  return (y - eta) / std::sqrt(f.theta[0]);
}

struct Interval {
  double lo;
  double hi;
};

namespace detail {
// Phi^{-1}(F(y)) using whichever of cdf/sf is far from one.
inline double score_at(const Family& f, long y, double eta) {
  const double c = cdf(f, static_cast<double>(y), eta);
  if (c < 0.5) return norm_quantile(c);
  return norm_quantile_sf(sf(f, static_cast<double>(y), eta));
}
}  // namespace detail

// (l, u] with l = Phi^{-1}(F(y-1)), u = Phi^{-1}(F(y)).
inline Interval latent_bounds(const Family& f, double y, double eta) {
  if (!f.discrete()) throw ContractViolation("latent_bounds needs a discrete family");
  validate(f);
  if (!in_support(f, y)) throw DataError("observation outside the family support");
  const long v = static_cast<long>(y);
  switch (f.kind) {
    case Kind::BernoulliProbit:
      return v == 0 ? Interval{-kInf, -eta} : Interval{-eta, kInf};
    case Kind::OrdinalProbit: {
      const auto cp = f.cutpoints();
      return {v == 1 ? -kInf : cp[v - 2] - eta, v == f.categories ? kInf : cp[v - 1] - eta};
    }
    default: break;
  }
  const double lo = v == f.support_min() ? -kInf : detail::score_at(f, v - 1, eta);
  const double hi = (f.support_max() >= 0 && v == f.support_max()) ? kInf : detail::score_at(f, v, eta);
  return {lo, hi};
}

// Smallest support value with cdf >= u (exact quantile for Gaussian).
inline double inverse_cdf(const Family& f, double u, double eta) {
  if (!(u > 0.0 && u < 1.0)) throw ParameterError("inverse_cdf: probability must lie in (0,1)");
  validate(f);
  if (f.kind == Kind::Gaussian) return eta + std::sqrt(f.theta[0]) * norm_quantile(u);
  long y;
  if (f.kind == Kind::BinomialLogit) {
    double pi, cpi;
    detail::binom_probs(eta, pi, cpi);
    y = static_cast<long>(boost::math::quantile(boost::math::binomial_distribution<>(f.trials, pi), u));
  } else if (f.kind == Kind::NegBinomialLogit) {
    double p, q;
    detail::nb_probs(eta, p, q);
    y = static_cast<long>(boost::math::quantile(boost::math::negative_binomial_distribution<>(f.theta[0], p), u));
  } else {
    y = f.support_min();
  }
  y = std::max(y, f.support_min());
  while (cdf(f, y, eta) < u) ++y;
  while (y > f.support_min() && cdf(f, y - 1, eta) >= u) --y;
  return static_cast<double>(y);
}

// Smallest support value with sf <= s; the upper-tail twin of inverse_cdf.
inline double inverse_sf(const Family& f, double s, double eta) {
  if (!(s > 0.0 && s < 1.0)) throw ParameterError("inverse_sf: probability must lie in (0,1)");
  if (f.kind == Kind::Gaussian) return eta + std::sqrt(f.theta[0]) * norm_quantile_sf(s);
  long y = static_cast<long>(inverse_cdf(f, std::clamp(1.0 - s, 1e-300, 1.0 - 1e-16), eta));
  while (sf(f, y, eta) > s) ++y;
  while (y > f.support_min() && sf(f, y - 1, eta) <= s) --y;
  return static_cast<double>(y);
}

// y = F^{-1}(Phi(z)) without rounding Phi(z) to one in the upper tail.
inline double quantile_from_score(const Family& f, double z, double eta) {
  if (f.kind == Kind::Gaussian) return eta + std::sqrt(f.theta[0]) * z;
  if (z <= 0.0) return inverse_cdf(f, std::max(norm_cdf(z), 1e-300), eta);
  return inverse_sf(f, std::max(norm_sf(z), 1e-300), eta);
}

}  // namespace bvsgcr
