#pragma once
// Posterior summaries, selection metrics and interval scores.
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "model.hpp"
#include "sampler.hpp"

namespace bvsgcr {

// p_k x m would be ragged when designs differ; one column vector per response.
inline std::vector<Eigen::VectorXd> mppi(const Trace& t) {
  if (t.size() == 0) throw ParameterError("mppi: empty trace");
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < t.m(); ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.gamma[0][k].size()));
    for (const auto& draw : t.gamma)
      for (std::size_t j = 0; j < draw[k].size(); ++j) v[j] += draw[k][j] ? 1.0 : 0.0;
    out.push_back(v / static_cast<double>(t.size()));
  }
  return out;
}

inline Eigen::MatrixXd eppi(const Trace& t) {
  if (t.size() == 0) throw ParameterError("eppi: empty trace");
  const int m = t.m();
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(m, m);
  for (const auto& g : t.graph) e += g.cast<double>();
  e /= static_cast<double>(t.size());
  e.diagonal().setOnes();
  return e;
}

struct RocPoint {
  double fpr, tpr;
};
struct Roc {
  std::vector<RocPoint> curve;  // (0,0) ... (1,1)
  double auc = 0.0;
};

// Thresholds at every distinct score; ties move diagonally, so the trapezoid
// area equals the Mann-Whitney statistic with ties counted 1/2.
inline Roc roc_auc(const Eigen::VectorXd& score, const std::vector<char>& truth) {
  if (static_cast<Eigen::Index>(truth.size()) != score.size()) throw ParameterError("roc: size mismatch");
  double npos = 0, nneg = 0;
  for (char t : truth) (t ? npos : nneg) += 1;
  if (npos == 0 || nneg == 0) throw ParameterError("roc: AUC undefined without both positives and negatives");
  std::vector<int> idx(truth.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return score[a] > score[b]; });
  Roc r;
  r.curve.push_back({0.0, 0.0});
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && score[idx[j]] == score[idx[i]]) {
      (truth[idx[j]] ? tp : fp) += 1;
      ++j;
    }
    const RocPoint prev = r.curve.back();
    RocPoint cur{fp / nneg, tp / npos};
    r.auc += (cur.fpr - prev.fpr) * 0.5 * (cur.tpr + prev.tpr);
    r.curve.push_back(cur);
    i = j;
  }
  return r;
}

// TPR at a fixed FPR grid by linear interpolation (upper value on vertical steps).
inline std::vector<double> roc_on_grid(const Roc& r, int points = 101) {
  std::vector<double> out(points);
  for (int g = 0; g < points; ++g) {
    const double f = static_cast<double>(g) / (points - 1);
    double v = 0.0;
    for (std::size_t i = 1; i < r.curve.size(); ++i) {
      const RocPoint& a = r.curve[i - 1];
      const RocPoint& b = r.curve[i];
      if (f < a.fpr || f > b.fpr) continue;
      v = std::max(v, b.fpr > a.fpr ? a.tpr + (b.tpr - a.tpr) * (f - a.fpr) / (b.fpr - a.fpr) : b.tpr);
    }
    out[g] = v;
  }
  return out;
}

inline std::vector<double> average_roc(const std::vector<Roc>& rocs, int points = 101) {
  std::vector<double> acc(points, 0.0);
  for (const auto& r : rocs) {
    const auto g = roc_on_grid(r, points);
    for (int i = 0; i < points; ++i) acc[i] += g[i] / rocs.size();
  }
  return acc;
}

// Type-7 (linear interpolation between order statistics) sample quantile.
inline double quantile7(std::vector<double> x, double prob) {
  if (x.empty()) throw ParameterError("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double h = (x.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - lo) * (x[hi] - x[lo]);
}

inline double interval_score(double lo, double hi, double truth, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("interval score: alpha must lie in (0,1)");
  double s = hi - lo;
  if (truth < lo) s += 2.0 / alpha * (lo - truth);
  if (truth > hi) s += 2.0 / alpha * (truth - hi);
  return s;
}

// Central (1 - alpha) interval from draws.
inline double interval_score(const std::vector<double>& draws, double truth, double alpha) {
  if (draws.size() < 2) throw ParameterError("interval score: need at least two draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("interval score: alpha must lie in (0,1)");
  return interval_score(quantile7(draws, alpha / 2), quantile7(draws, 1 - alpha / 2), truth, alpha);
}

inline std::vector<double> beta_draws(const Trace& t, int k, int j) {
  std::vector<double> v;
  v.reserve(t.size());
  for (const auto& b : t.beta) v.push_back(b[k][j]);
  return v;
}

struct SummaryRow {
  std::string name;
  double mean, sd, q025, q50, q975;
};

inline SummaryRow summarize_draws(const std::string& name, const std::vector<double>& x) {
  SummaryRow r{name, 0, 0, 0, 0, 0};
  for (double v : x) r.mean += v / x.size();
  for (double v : x) r.sd += (v - r.mean) * (v - r.mean);
  r.sd = x.size() > 1 ? std::sqrt(r.sd / (x.size() - 1)) : 0.0;
  r.q025 = quantile7(x, 0.025);
  r.q50 = quantile7(x, 0.5);
  r.q975 = quantile7(x, 0.975);
  return r;
}

// beta[k][j], theta[k][c], R[a][b] (a < b).
inline std::vector<SummaryRow> summarize(const Trace& t) {
  if (t.size() == 0) throw ParameterError("summarize: empty trace");
  std::vector<SummaryRow> rows;
  const int m = t.m();
  for (int k = 0; k < m; ++k)
    for (std::size_t j = 0; j < t.gamma[0][k].size(); ++j)
      rows.push_back(summarize_draws("beta[" + std::to_string(k) + "][" + std::to_string(j) + "]",
                                     beta_draws(t, k, static_cast<int>(j))));
  for (int k = 0; k < m; ++k)
    for (std::size_t c = 0; c < t.theta[0][k].size(); ++c) {
      std::vector<double> x;
      for (const auto& th : t.theta) x.push_back(th[k][c]);
      rows.push_back(summarize_draws("theta[" + std::to_string(k) + "][" + std::to_string(c) + "]", x));
    }
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      std::vector<double> x;
      for (const auto& r : t.R) x.push_back(r(a, b));
      rows.push_back(summarize_draws("R[" + std::to_string(a) + "][" + std::to_string(b) + "]", x));
    }
  return rows;
}

// Draws x rows pointwise log-likelihood: for each response the conditional
// form given the other latent columns (continuous density or interval mass),
// missing cells skipped. Without stored latents the conditioning is dropped.
inline Eigen::MatrixXd loglik_matrix(const Trace& t, const Dataset& d) {
  if (t.size() == 0) throw ParameterError("loglik: empty trace");
  if (t.m() != d.m()) throw DataError("loglik: trace and data disagree on the number of responses");
  const int n = d.n(), m = d.m();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.size()), n);
  for (std::size_t s = 0; s < t.size(); ++s) {
    Eigen::MatrixXd rinv = Eigen::MatrixXd::Identity(m, m);
    const bool cond = !t.Zt.empty();
    if (cond) rinv = t.R[s].llt().solve(Eigen::MatrixXd::Identity(m, m));
    for (int k = 0; k < m; ++k) {
      const Family f = family_from_natural(t.families[k], t.theta[s][k]);
      Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < d.p(k); ++j)
        if (t.gamma[s][k][j]) eta += t.beta[s][k][j] * d.X[k].col(j);
      ConditionalMoments mom;
      if (cond) {
        mom = conditional_moments_from_precision(rinv, t.Zt[s], k);
      } else {
        mom.mu = Eigen::VectorXd::Zero(n);
        mom.sigma2 = 1.0;
      }
      const double sd = std::sqrt(mom.sigma2);
      const double dk = f.discrete() ? 1.0 : std::sqrt(f.theta[0]);
      for (int i = 0; i < n; ++i) {
        if (d.missing(i, k)) continue;
        if (!f.discrete()) {
          const double r = (d.Y(i, k) - eta[i] - dk * mom.mu[i]) / (dk * sd);
          out(s, i) += norm_logpdf(r) - std::log(dk * sd);
        } else {
          const Interval b = latent_bounds(f, d.Y(i, k), eta[i]);
          out(s, i) += norm_log_interval((b.lo - mom.mu[i]) / sd, (b.hi - mom.mu[i]) / sd);
        }
      }
    }
  }
  return out;
}

}  // namespace bvsgcr
