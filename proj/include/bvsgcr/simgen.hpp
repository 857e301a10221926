#pragma once
// Simulation study: AR(1) predictors, sparse coefficient matrices, copula
// responses and the four preset scenarios.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "marginals.hpp"
#include "model.hpp"

namespace bvsgcr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-mode stream splitting: independent seed per (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

struct Scenario {
  std::string id;
  int n = 50;
  int p = 30;
  std::vector<Family> families;                           // generative theta
  std::vector<std::pair<double, double>> cutpoint_range;  // per response, ordinal only
  double pi1 = 0.15, pi2 = 0.95;
  double b_gauss = 1.0, s2_gauss = 1.0;
  double b_disc = 0.5, s2_disc = 0.2;
  double rho_x = 0.7, rho_r = 0.8;
  int replicates = 20;
  std::uint64_t seed = 1;
  bool shared_X = true;

  int m() const { return static_cast<int>(families.size()); }
  double b(int k) const { return families[k].discrete() ? b_disc : b_gauss; }
  double s2(int k) const { return families[k].discrete() ? s2_disc : s2_gauss; }

  void validate() const {
    if (n < 1 || p < 1 || families.empty()) throw ParameterError("scenario: need n, p >= 1 and at least one response");
    if (!(pi1 >= 0 && pi1 <= 1 && pi2 >= 0 && pi2 <= 1)) throw ParameterError("scenario: probabilities must lie in [0,1]");
    if (replicates < 1) throw ParameterError("scenario: replicates must be >= 1");
    if (cutpoint_range.size() != families.size()) throw ParameterError("scenario: one cut-point range per response");
  }
};

// Presets I-IV. I/II: 3 Gaussian (variance 3), binary, ordinal C=3 and C=4.
// III/IV: Gaussian (variance 1), two NB (theta 0.5), binomial (N=10).
inline Scenario scenario_preset(const std::string& id) {
  Scenario s;
  s.id = id;
  const bool small = id == "I" || id == "III";
  if (!small && id != "II" && id != "IV") throw ConfigError("unknown scenario '" + id + "'");
  s.n = small ? 50 : 100;
  s.p = small ? 30 : 100;
  s.pi1 = small ? 0.15 : 0.05;
  s.pi2 = 0.95;
  if (id == "I" || id == "II") {
    s.families = {Family::gaussian(3), Family::gaussian(3), Family::gaussian(3), Family::bernoulli(),
                  Family::ordinal(3), Family::ordinal(4)};
    s.cutpoint_range = {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 1}, {1, 2}};
  } else {
    s.families = {Family::gaussian(1), Family::negbin(0.5), Family::negbin(0.5), Family::binomial(10)};
    s.cutpoint_range.assign(4, {0, 0});
  }
  return s;
}

// Rows iid N(0, S) with S_jj' = rho^|j-j'|.
template <class Rng>
Eigen::MatrixXd gen_predictors(int n, int p, Rng& rng, double rho = 0.7) {
  if (n < 1 || p < 1) throw ParameterError("gen_predictors: n and p must be >= 1");
  Eigen::MatrixXd s(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) s(a, b) = std::pow(rho, std::abs(a - b));
  const Eigen::MatrixXd l = s.llt().matrixL();
  std::normal_distribution<double> nd;
  Eigen::MatrixXd e(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) e(i, j) = nd(rng);
  return e * l.transpose();
}

struct Coefficients {
  Eigen::MatrixXd B;       // p x m
  Eigen::MatrixXi gamma1;  // cellwise Bernoulli(pi1)
  Eigen::VectorXi gamma2;  // rowwise Bernoulli(pi2)
  Eigen::MatrixXd B3;      // N(b_k, s2_k)
};

// B = Gamma1 o Gamma2 o B3 with per-column (b, s2).
template <class Rng>
Coefficients gen_coefficients(int p, int m, double pi1, double pi2, const std::vector<double>& b,
                              const std::vector<double>& s2, Rng& rng) {
  if (!(pi1 >= 0 && pi1 <= 1 && pi2 >= 0 && pi2 <= 1)) throw ParameterError("gen_coefficients: invalid probability");
  Coefficients c;
  c.gamma1.resize(p, m);
  c.gamma2.resize(p);
  c.B3.resize(p, m);
  std::bernoulli_distribution b1(pi1), b2(pi2);
  std::normal_distribution<double> nd;
  for (int j = 0; j < p; ++j) c.gamma2[j] = b2(rng);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < m; ++k) {
      c.gamma1(j, k) = b1(rng);
      c.B3(j, k) = b[k] + std::sqrt(s2[k]) * nd(rng);
    }
  c.B = (c.gamma1.cast<double>().array() * c.B3.array()).matrix();
  for (int j = 0; j < p; ++j) c.B.row(j) *= c.gamma2[j];
  return c;
}

inline Eigen::MatrixXd ar1_correlation(int m, double rho) {
  Eigen::MatrixXd r(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) r(a, b) = std::pow(rho, std::abs(a - b));
  return r;
}

// Z~_i ~ N(0, R); y_ik = F_k^{-1}(Phi(z~_ik)) with eta_ik = x_ik' beta_k.
// X holds one matrix (shared) or one per response.
template <class Rng>
Eigen::MatrixXd gen_responses(const std::vector<Family>& families, const std::vector<Eigen::MatrixXd>& X,
                              const Eigen::MatrixXd& B, const Eigen::MatrixXd& R, Rng& rng,
                              Eigen::MatrixXd* latents = nullptr) {
  const int m = static_cast<int>(families.size());
  const Eigen::Index n = X.front().rows();
  const Eigen::MatrixXd l = R.llt().matrixL();
  std::normal_distribution<double> nd;
  Eigen::MatrixXd e(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) e(i, k) = nd(rng);
  const Eigen::MatrixXd zt = e * l.transpose();
  Eigen::MatrixXd y(n, m);
  for (int k = 0; k < m; ++k) {
    const Eigen::VectorXd eta = X[X.size() == 1 ? 0 : k] * B.col(k);
    for (Eigen::Index i = 0; i < n; ++i) y(i, k) = quantile_from_score(families[k], zt(i, k), eta[i]);
  }
  if (latents) *latents = zt;
  return y;
}

struct Replicate {
  std::uint64_t seed = 0;
  int index = 0;
  std::vector<Eigen::MatrixXd> X;  // one if shared
  Eigen::MatrixXd Y;
  Coefficients coef;
  Eigen::MatrixXd R;
  std::vector<Family> families;  // generative, with drawn cut-points
  std::vector<std::vector<double>> cutpoints;  // natural scale, as drawn
};

template <class Rng = std::mt19937_64>
Replicate generate_replicate(const Scenario& sc, int index) {
  sc.validate();
  Replicate r;
  r.index = index;
  r.seed = derive_seed(sc.seed, static_cast<std::uint64_t>(index));
  Rng rng(r.seed);
  const int m = sc.m();
  r.families = sc.families;
  r.cutpoints.resize(m);
  for (int k = 0; k < m; ++k) {
    if (sc.families[k].kind != Kind::OrdinalProbit) continue;
    std::uniform_real_distribution<double> u(sc.cutpoint_range[k].first, sc.cutpoint_range[k].second);
    std::vector<double> cp(sc.families[k].categories - 1);
    for (auto& c : cp) c = u(rng);
    std::sort(cp.begin(), cp.end());
    r.cutpoints[k] = cp;
  }
  const int nx = sc.shared_X ? 1 : m;
  for (int t = 0; t < nx; ++t) r.X.push_back(gen_predictors(sc.n, sc.p, rng, sc.rho_x));
  std::vector<double> b(m), s2(m);
  for (int k = 0; k < m; ++k) {
    b[k] = sc.b(k);
    s2[k] = sc.s2(k);
  }
  r.coef = gen_coefficients(sc.p, m, sc.pi1, sc.pi2, b, s2, rng);
  r.R = ar1_correlation(m, sc.rho_r);
  // Ordinal generation uses the drawn cut-points directly; the fitted model
  // pins theta_1 = 0 and lets the intercept absorb the shift.
  std::vector<Family> gen = r.families;
  Eigen::MatrixXd eta_shift = Eigen::MatrixXd::Zero(1, m);
  for (int k = 0; k < m; ++k) {
    if (gen[k].kind != Kind::OrdinalProbit) continue;
    const auto& cp = r.cutpoints[k];
    std::vector<double> shifted(cp.size());
    for (std::size_t c = 0; c < cp.size(); ++c) shifted[c] = cp[c] - cp[0];
    // strictly increasing after sorting unless two draws coincide
    for (std::size_t c = 1; c < shifted.size(); ++c) shifted[c] = std::max(shifted[c], shifted[c - 1] + 1e-12);
    gen[k] = Family::ordinal_from_cutpoints(shifted);
    eta_shift(0, k) = -cp[0];
  }
  // Phi(theta_c - eta) = Phi((theta_c - theta_1) - (eta - theta_1))
  Eigen::MatrixXd zt;
  const Eigen::Index n = sc.n;
  std::normal_distribution<double> nd;
  const Eigen::MatrixXd l = r.R.llt().matrixL();
  Eigen::MatrixXd e(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) e(i, k) = nd(rng);
  zt = e * l.transpose();
  r.Y.resize(n, m);
  for (int k = 0; k < m; ++k) {
    Eigen::VectorXd eta = r.X[sc.shared_X ? 0 : k] * r.coef.B.col(k);
    eta.array() += eta_shift(0, k);
    for (Eigen::Index i = 0; i < n; ++i) r.Y(i, k) = quantile_from_score(gen[k], zt(i, k), eta[i]);
  }
  return r;
}

// Model-ready dataset: intercept (confounder) followed by the p predictors.
inline Dataset replicate_dataset(const Scenario& sc, const Replicate& r) {
  Dataset d;
  d.Y = r.Y;
  const int m = sc.m();
  for (int k = 0; k < m; ++k) {
    Family f = sc.families[k];
    if (f.kind == Kind::NegBinomialLogit) f.theta = {1.0};
    d.families.push_back(f);
    const Eigen::MatrixXd& x = r.X[sc.shared_X ? 0 : k];
    Eigen::MatrixXd xi(x.rows(), x.cols() + 1);
    xi.col(0).setOnes();
    xi.rightCols(x.cols()) = x;
    d.X.push_back(xi);
    std::vector<char> conf(x.cols() + 1, 0);
    conf[0] = 1;
    d.confounder.push_back(conf);
    d.response_names.push_back("y" + std::to_string(k + 1));
    std::vector<std::string> names{"intercept"};
    for (int j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    d.predictor_names.push_back(names);
  }
  return d;
}

}  // namespace bvsgcr
