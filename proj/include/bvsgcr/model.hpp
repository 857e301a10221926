#pragma once
// Data, hyperparameters, chain state and the prior pieces of the posterior.
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "graphs.hpp"
#include "marginals.hpp"
#include "truncated_normal.hpp"

namespace bvsgcr {

// Y holds NaN for missing cells. X[k] is the n x p_k design for response k;
// columns flagged in confounder[k] are always in the model.
struct Dataset {
  Eigen::MatrixXd Y;
  std::vector<Family> families;
  std::vector<Eigen::MatrixXd> X;
  std::vector<std::vector<char>> confounder;
  std::vector<std::string> response_names;
  std::vector<std::vector<std::string>> predictor_names;

  int n() const { return static_cast<int>(Y.rows()); }
  int m() const { return static_cast<int>(Y.cols()); }
  int p(int k) const { return static_cast<int>(X[k].cols()); }
  bool missing(int i, int k) const { return std::isnan(Y(i, k)); }
  int free_count(int k) const {
    int c = 0;
    for (char f : confounder[k]) c += !f;
    return c;
  }

  void validate() const {
    const int m_ = m();
    if (static_cast<int>(families.size()) != m_ || static_cast<int>(X.size()) != m_ ||
        static_cast<int>(confounder.size()) != m_)
      throw DataError("dataset: per-response vectors must have one entry per response");
    for (int k = 0; k < m_; ++k) {
      if (X[k].rows() != Y.rows()) throw DataError("dataset: predictor rows do not match responses");
      if (static_cast<Eigen::Index>(confounder[k].size()) != X[k].cols())
        throw DataError("dataset: confounder mask does not match predictor columns");
      if (!X[k].allFinite()) throw DataError("dataset: predictors must be finite (impute first)");
      for (int i = 0; i < n(); ++i)
        if (!missing(i, k) && !in_support(families[k], Y(i, k))) {
          std::ostringstream os;
          os << "dataset: response " << k << " row " << i << " value " << Y(i, k) << " outside the "
             << kind_name(families[k].kind) << " support";
          throw DataError(os.str());
        }
    }
  }
};

// Center and scale every non-constant predictor column.
inline void standardize_predictors(Dataset& d) {
  for (auto& x : d.X)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double mu = x.col(j).mean();
      const double sd = std::sqrt((x.col(j).array() - mu).square().sum() / std::max<Eigen::Index>(x.rows() - 1, 1));
      if (sd > 0.0) x.col(j) = (x.col(j).array() - mu) / sd;
    }
}

struct Hyperparams {
  double v = 1.0;                     // slab variance
  std::vector<double> a, b;           // beta prior on inclusion, per response
  double confounder_variance = 100.0; // intercept and other fixed columns
  double cutpoint_sd = 10.0;
  double nb_shape = 2.0, nb_rate = 1.0;
  double p_add = 0.45, p_delete = 0.45, p_swap = 0.10;
  double w_geometric = 0.7, w_uniform = 0.3;

  void validate(int m) const {
    if (!(v > 0.0)) throw ParameterError("slab variance must be positive");
    if (static_cast<int>(a.size()) != m || static_cast<int>(b.size()) != m)
      throw ParameterError("need one (a, b) pair per response");
    for (int k = 0; k < m; ++k)
      if (!(a[k] > 0.0 && b[k] > 0.0)) throw ParameterError("beta hyperparameters must be positive");
    if (std::abs(p_add + p_delete + p_swap - 1.0) > 1e-12) throw ParameterError("move probabilities must sum to 1");
    if (std::abs(w_geometric + w_uniform - 1.0) > 1e-12) throw ParameterError("rank mixture weights must sum to 1");
    if (!(confounder_variance > 0.0 && cutpoint_sd > 0.0 && nb_shape > 0.0 && nb_rate > 0.0))
      throw ParameterError("prior scales must be positive");
  }
  // prior mean of |gamma_k| given p free predictors
  double expected_size(int k, int p) const { return p * a[k] / (a[k] + b[k]); }
};

struct BetaHyper {
  double a, b;
};

// Beta-binomial moment matching for |gamma| with mean E and variance V.
inline BetaHyper elicit_beta_hyperparams(double expected_size, double variance, int p) {
  if (!(expected_size > 0.0 && expected_size < p))
    throw ParameterError("elicitation: expected size must lie strictly between 0 and p");
  const double pi = expected_size / p;
  const double binom = p * pi * (1.0 - pi);
  const double rho = variance / binom;
  if (!(rho > 1.0 && rho < p)) {
    std::ostringstream os;
    os << "elicitation infeasible: variance must lie in (" << binom << ", " << binom * p << ") for E=" << expected_size
       << ", p=" << p << " (got " << variance << ")";
    throw ParameterError(os.str());
  }
  const double s = (p - rho) / (rho - 1.0);
  return {pi * s, (1.0 - pi) * s};
}

inline double lbeta(double x, double y) { return std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y); }

// log p(gamma) for a model of the given size among p free predictors.
inline double log_prior_gamma(int size, int p, double a, double b) {
  return lbeta(a + size, b + p - size) - lbeta(a, b);
}
inline double log_prior_gamma(const std::vector<char>& gamma, double a, double b) {
  int s = 0;
  for (char g : gamma) s += g != 0;
  return log_prior_gamma(s, static_cast<int>(gamma.size()), a, b);
}

// Slab prior N(0, v) on active coefficients.
inline double log_prior_beta(const Eigen::VectorXd& beta, const std::vector<char>& gamma, double v) {
  double s = 0.0;
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (!gamma[j]) {
      if (beta[j] != 0.0) throw ContractViolation("state corruption: nonzero coefficient outside the model");
      continue;
    }
    s += -0.5 * (kLog2Pi + std::log(v) + beta[j] * beta[j] / v);
  }
  return s;
}

struct ModelState {
  std::vector<Eigen::VectorXd> beta;       // length p_k, zero off-model
  std::vector<std::vector<char>> gamma;    // confounders fixed at 1
  std::vector<Family> families;            // current theta
  Eigen::MatrixXd Zt;                      // n x m latent scores
  Eigen::VectorXd delta;                   // expansion scales
  Eigen::MatrixXd R, Rinv, Sigma;
  DecomposableGraph G;
  long iteration = 0;

  int m() const { return static_cast<int>(families.size()); }
  std::vector<int> active(int k) const {
    std::vector<int> out;
    for (std::size_t j = 0; j < gamma[k].size(); ++j)
      if (gamma[k][j]) out.push_back(static_cast<int>(j));
    return out;
  }
  double sigma(int k) const { return families[k].discrete() ? 1.0 : delta[k]; }
};

inline Eigen::VectorXd linear_predictor(const Dataset& d, const ModelState& s, int k) {
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(d.n());
  for (std::size_t j = 0; j < s.gamma[k].size(); ++j)
    if (s.gamma[k][j]) eta.noalias() += s.beta[k][j] * d.X[k].col(j);
  return eta;
}

// Throws ContractViolation describing the first broken invariant.
inline void check_invariants(const Dataset& d, const ModelState& s, double tol = 1e-8) {
  const int m = d.m();
  for (int k = 0; k < m; ++k) {
    validate(s.families[k]);
    for (std::size_t j = 0; j < s.gamma[k].size(); ++j) {
      if (d.confounder[k][j] && !s.gamma[k][j]) throw ContractViolation("confounder dropped from the model");
      if (!s.gamma[k][j] && s.beta[k][j] != 0.0) throw ContractViolation("nonzero coefficient outside the model");
    }
  }
  if ((s.R.diagonal().array() - 1.0).abs().maxCoeff() > tol) throw ContractViolation("R must have unit diagonal");
  const Eigen::MatrixXd drd = s.delta.asDiagonal() * s.R * s.delta.asDiagonal();
  if ((drd - s.Sigma).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, s.Sigma.cwiseAbs().maxCoeff()))
    throw ContractViolation("Sigma differs from D R D");
  Eigen::LLT<Eigen::MatrixXd> llt(s.R);
  if (llt.info() != Eigen::Success) throw ContractViolation("R is not positive definite");
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      if (a != b && !s.G.adj(a, b) && s.Rinv(a, b) != 0.0)
        throw ContractViolation("inverse correlation is nonzero on a non-edge");
  for (int k = 0; k < m; ++k) {
    const Eigen::VectorXd eta = linear_predictor(d, s, k);
    for (int i = 0; i < d.n(); ++i) {
      if (d.missing(i, k)) continue;
      const double z = s.Zt(i, k);
      if (!s.families[k].discrete()) {
        const double ns = normal_score(s.families[k], d.Y(i, k), eta[i]);
        if (std::abs(ns - z) > tol * std::max(1.0, std::abs(ns))) throw ContractViolation("continuous latent is not its normal score");
      } else {
        const Interval b = latent_bounds(s.families[k], d.Y(i, k), eta[i]);
        const double slack = tol * std::max(1.0, std::abs(z));
        if (!(z > b.lo - slack && z <= b.hi + slack)) throw ContractViolation("discrete latent outside its interval");
      }
    }
  }
}

namespace detail {
inline bool is_intercept(const Eigen::MatrixXd& x, Eigen::Index j) {
  return x.rows() > 0 && (x.col(j).array() == 1.0).all();
}
}  // namespace detail

// Confounders only, R = I, empty graph, theta from data moments.
template <class Rng>
ModelState init_state(const Dataset& d, const Hyperparams& h, Rng& rng) {
  d.validate();
  h.validate(d.m());
  const int n = d.n(), m = d.m();
  ModelState s;
  s.families = d.families;
  s.beta.resize(m);
  s.gamma.resize(m);
  s.delta = Eigen::VectorXd::Ones(m);
  s.Zt = Eigen::MatrixXd::Zero(n, m);
  std::normal_distribution<double> nd;
  for (int k = 0; k < m; ++k) {
    s.beta[k] = Eigen::VectorXd::Zero(d.p(k));
    s.gamma[k].assign(d.confounder[k].begin(), d.confounder[k].end());
    std::vector<double> obs;
    for (int i = 0; i < n; ++i)
      if (!d.missing(i, k)) obs.push_back(d.Y(i, k));
    if (obs.size() < 2) throw DataError("response " + std::to_string(k) + " has fewer than two observed values");
    const auto [mn, mx] = std::minmax_element(obs.begin(), obs.end());
    if (*mn == *mx) throw DataError("response " + std::to_string(k) + " is constant");
    const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / obs.size();
    Eigen::Index icol = -1;
    for (Eigen::Index j = 0; j < d.X[k].cols(); ++j)
      if (d.confounder[k][j] && detail::is_intercept(d.X[k], j)) icol = j;
    Family& f = s.families[k];
    double eta0 = 0.0;
    switch (f.kind) {
      case Kind::Gaussian: {
        eta0 = icol >= 0 ? mean : 0.0;
        double ss = 0.0;
        for (double y : obs) ss += (y - eta0) * (y - eta0);
        f.theta = {ss / (obs.size() - (icol >= 0 ? 1 : 0))};
        break;
      }
      case Kind::BernoulliProbit:
        eta0 = norm_quantile(std::clamp(mean, 0.01, 0.99));
        break;
      case Kind::OrdinalProbit: {
        std::vector<double> cum(f.categories, 0.0);
        for (double y : obs) cum[static_cast<int>(y) - 1] += 1.0 / obs.size();
        for (int c = 1; c < f.categories; ++c) cum[c] += cum[c - 1];
        std::vector<double> q(f.categories - 1);
        for (int c = 0; c + 1 < f.categories; ++c) q[c] = norm_quantile(std::clamp(cum[c], 0.01, 0.99));
        eta0 = icol >= 0 ? -q[0] : 0.0;
        std::vector<double> cp{0.0};
        for (int c = 1; c + 1 < f.categories; ++c) cp.push_back(std::max(cp.back() + 0.1, q[c] - q[0]));
        f = Family::ordinal_from_cutpoints(cp);
        break;
      }
      case Kind::BinomialLogit: {
        const double pbar = std::clamp(mean / f.trials, 0.01, 0.99);
        eta0 = std::log((1.0 - pbar) / pbar);
        break;
      }
      case Kind::NegBinomialLogit: {
        // mean theta/(1+e^eta) cannot exceed theta
        const double th = mean < 0.9 ? 1.0 : 2.0 * mean;
        f.theta = {th};
        eta0 = std::log(std::max(th / std::max(mean, 1e-3) - 1.0, 1e-2));
        break;
      }
    }
    if (icol >= 0) s.beta[k][icol] = eta0;
    else eta0 = 0.0;
    if (f.kind == Kind::Gaussian) s.delta[k] = std::sqrt(f.theta[0]);
    for (int i = 0; i < n; ++i) {
      if (d.missing(i, k)) {
        s.Zt(i, k) = nd(rng);
      } else if (!f.discrete()) {
        s.Zt(i, k) = normal_score(f, d.Y(i, k), eta0);
      } else {
        const Interval b = latent_bounds(f, d.Y(i, k), eta0);
        if (!(b.lo < b.hi)) throw DataError("response " + std::to_string(k) + ": degenerate latent interval at init");
        s.Zt(i, k) = sample_truncated_normal(0.0, 1.0, b.lo, b.hi, rng);
      }
    }
  }
  s.R = Eigen::MatrixXd::Identity(m, m);
  s.Rinv = s.R;
  s.Sigma = s.delta.array().square().matrix().asDiagonal();
  s.G = DecomposableGraph::empty(m);
  return s;
}

}  // namespace bvsgcr
