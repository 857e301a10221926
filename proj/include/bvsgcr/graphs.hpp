#pragma once
// Decomposable graphs, junction trees and hyper-inverse Wishart (HIW) laws.
//
// HIW(b, Lambda) follows Dawid's convention: on a complete component of size p
// it is the inverse Wishart with density proportional to
// |Sigma|^{-(b+2p)/2} exp(-tr(Sigma^{-1} Lambda)/2), i.e. df nu = b + p - 1.
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "normal.hpp"

namespace bvsgcr {

using Adjacency = Eigen::MatrixXi;
using VertexSet = std::vector<int>;

inline void check_adjacency(const Adjacency& a) {
  if (a.rows() != a.cols()) throw StructuralError("adjacency must be square");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 1) throw StructuralError("adjacency diagonal must be 1");
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) != 0 && a(i, j) != 1) throw StructuralError("adjacency must be binary");
      if (a(i, j) != a(j, i)) throw StructuralError("adjacency must be symmetric");
    }
  }
}

// Maximum cardinality search; ties go to the lowest vertex index.
inline std::vector<int> mcs_order(const Adjacency& a) {
  const int m = static_cast<int>(a.rows());
  std::vector<int> order, weight(m, 0);
  std::vector<char> done(m, 0);
  for (int step = 0; step < m; ++step) {
    int best = -1;
    for (int v = 0; v < m; ++v)
      if (!done[v] && (best < 0 || weight[v] > weight[best])) best = v;
    order.push_back(best);
    done[best] = 1;
    for (int u = 0; u < m; ++u)
      if (!done[u] && a(best, u)) ++weight[u];
  }
  return order;
}

namespace detail {
// earlier-numbered neighbours of each vertex along an MCS order
inline std::vector<VertexSet> earlier_neighbours(const Adjacency& a, const std::vector<int>& order) {
  std::vector<VertexSet> out(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (a(order[i], order[j])) out[i].push_back(order[j]);
  return out;
}
inline bool is_subset(const VertexSet& s, const VertexSet& t) {
  for (int v : s)
    if (std::find(t.begin(), t.end(), v) == t.end()) return false;
  return true;
}
}  // namespace detail

// Chordality test: every vertex's earlier neighbours under MCS form a clique.
inline bool is_decomposable(const Adjacency& a) {
  check_adjacency(a);
  const auto order = mcs_order(a);
  const auto nb = detail::earlier_neighbours(a, order);
  for (const auto& s : nb)
    for (std::size_t x = 0; x < s.size(); ++x)
      for (std::size_t y = x + 1; y < s.size(); ++y)
        if (!a(s[x], s[y])) return false;
  return true;
}

struct JunctionTree {
  std::vector<VertexSet> cliques;     // perfect order, each sorted
  std::vector<VertexSet> separators;  // separators[j] belongs to cliques[j+1]
};

inline JunctionTree junction_tree(const Adjacency& a) {
  if (!is_decomposable(a)) throw ContractViolation("junction_tree: graph is not decomposable");
  const auto order = mcs_order(a);
  const auto nb = detail::earlier_neighbours(a, order);
  std::vector<VertexSet> cand(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    cand[i] = nb[i];
    cand[i].push_back(order[i]);
    std::sort(cand[i].begin(), cand[i].end());
  }
  JunctionTree jt;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    bool maximal = true;
    for (std::size_t j = 0; j < cand.size() && maximal; ++j)
      if (j != i && cand[j].size() > cand[i].size() && detail::is_subset(cand[i], cand[j])) maximal = false;
    if (maximal) jt.cliques.push_back(cand[i]);
  }
  VertexSet seen = jt.cliques[0];
  std::size_t total = jt.cliques[0].size(), sep_total = 0;
  for (std::size_t j = 1; j < jt.cliques.size(); ++j) {
    VertexSet s;
    for (int v : jt.cliques[j])
      if (std::find(seen.begin(), seen.end(), v) != seen.end()) s.push_back(v);
    bool rip = false;
    for (std::size_t i = 0; i < j && !rip; ++i) rip = detail::is_subset(s, jt.cliques[i]);
    if (!rip) throw ContractViolation("junction_tree: running intersection property violated");
    for (int v : jt.cliques[j])
      if (std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
    total += jt.cliques[j].size();
    sep_total += s.size();
    jt.separators.push_back(std::move(s));
  }
  if (total - sep_total != static_cast<std::size_t>(a.rows()))
    throw ContractViolation("junction_tree: clique/separator sizes do not tile the vertex set");
  return jt;
}

struct DecomposableGraph {
  int m = 0;
  Adjacency adj;
  JunctionTree jt;

  static DecomposableGraph from_adjacency(const Adjacency& a) {
    DecomposableGraph g;
    g.m = static_cast<int>(a.rows());
    g.adj = a;
    g.jt = junction_tree(a);
    return g;
  }
  static DecomposableGraph empty(int m) { return from_adjacency(Adjacency::Identity(m, m)); }
  static DecomposableGraph complete(int m) { return from_adjacency(Adjacency::Ones(m, m)); }

  int edges() const { return static_cast<int>((adj.sum() - m) / 2); }
  int degree(int k) const { return adj.row(k).sum() - 1; }
  const std::vector<VertexSet>& cliques() const { return jt.cliques; }
  const std::vector<VertexSet>& separators() const { return jt.separators; }
};

namespace detail {

inline Eigen::MatrixXd sub(const Eigen::MatrixXd& x, const VertexSet& r, const VertexSet& c) {
  Eigen::MatrixXd out(r.size(), c.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = x(r[i], c[j]);
  return out;
}

inline double lmvgamma(int p, double a) {
  double s = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= p; ++j) s += std::lgamma(a + 0.5 * (1 - j));
  return s;
}

inline double logdet_spd(const Eigen::MatrixXd& x) {
  Eigen::LLT<Eigen::MatrixXd> llt(x);
  if (llt.info() != Eigen::Success) throw ParameterError("matrix is not positive definite");
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) throw ParameterError("matrix is not positive definite");
    s += std::log(l(i, i));
  }
  return 2.0 * s;
}

}  // namespace detail

// log of the complete-component constant |Lambda/2|^{(b+p-1)/2} / Gamma_p((b+p-1)/2).
inline double iw_log_norm(double b, const Eigen::MatrixXd& lambda) {
  const int p = static_cast<int>(lambda.rows());
  if (p == 0) return 0.0;
  const double a = 0.5 * (b + p - 1);
  return a * (detail::logdet_spd(lambda) - p * std::log(2.0)) - detail::lmvgamma(p, a);
}

inline double hiw_log_norm(const DecomposableGraph& g, double b, const Eigen::MatrixXd& lambda) {
  if (!(b > 0.0)) throw ParameterError("HIW degrees of freedom must be positive");
  double s = 0.0;
  for (const auto& c : g.cliques()) s += iw_log_norm(b, detail::sub(lambda, c, c));
  for (const auto& sp : g.separators()) s -= iw_log_norm(b, detail::sub(lambda, sp, sp));
  return s;
}

// log p(W | G) with Sigma | G ~ HIW(2, I) integrated out.
inline double log_marginal_latents(const DecomposableGraph& g, const Eigen::MatrixXd& w) {
  const Eigen::Index n = w.rows();
  if (n == 0) return 0.0;
  const int m = g.m;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd post = id + w.transpose() * w;
  return -0.5 * m * n * kLog2Pi + hiw_log_norm(g, 2.0, id) - hiw_log_norm(g, 2.0 + n, post);
}

inline double iw_log_density(const Eigen::MatrixXd& sigma, double b, const Eigen::MatrixXd& lambda) {
  const int p = static_cast<int>(sigma.rows());
  if (p == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return -kInf;
  const double ld = detail::logdet_spd(sigma);
  const double tr = llt.solve(lambda).trace();
  return iw_log_norm(b, lambda) - 0.5 * (b + 2 * p) * ld - 0.5 * tr;
}

// log HIW_G(Sigma | b, Lambda); only entries on cliques are read.
inline double hiw_log_density(const DecomposableGraph& g, const Eigen::MatrixXd& sigma, double b,
                              const Eigen::MatrixXd& lambda) {
  double s = 0.0;
  for (const auto& c : g.cliques()) s += iw_log_density(detail::sub(sigma, c, c), b, detail::sub(lambda, c, c));
  for (const auto& sp : g.separators())
    s -= iw_log_density(detail::sub(sigma, sp, sp), b, detail::sub(lambda, sp, sp));
  return s;
}

// Standard inverse Wishart IW_nu(Psi) (mean Psi/(nu-p-1)) via Bartlett.
template <class Rng>
Eigen::MatrixXd sample_inverse_wishart(double nu, const Eigen::MatrixXd& psi, Rng& rng) {
  const Eigen::Index p = psi.rows();
  if (!(nu > p - 1)) throw ParameterError("inverse Wishart needs nu > p - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success) throw ParameterError("inverse Wishart scale is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    std::chi_squared_distribution<double> chi(nu - static_cast<double>(i));
    a(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = nd(rng);
  }
  // W = L^{-T} A A^T L^{-1} ~ Wishart(Psi^{-1}); Sigma = W^{-1} = (L A^{-T})(L A^{-T})^T
  const Eigen::MatrixXd ainv = a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd t = l * ainv.transpose();
  return t * t.transpose();
}

// Clique-by-clique draw in perfect order; non-edges are filled so that the
// precision is exactly zero there (see hiw_precision).
template <class Rng>
Eigen::MatrixXd sample_hiw(const DecomposableGraph& g, double b, const Eigen::MatrixXd& lambda, Rng& rng) {
  if (!(b > 0.0)) throw ParameterError("HIW degrees of freedom must be positive");
  const int m = g.m;
  Eigen::MatrixXd sig = Eigen::MatrixXd::Zero(m, m);
  VertexSet done;
  std::normal_distribution<double> nd;
  const auto& cl = g.cliques();
  for (std::size_t j = 0; j < cl.size(); ++j) {
    const VertexSet& c = cl[j];
    const VertexSet s = j == 0 ? VertexSet{} : g.separators()[j - 1];
    VertexSet r;
    for (int v : c)
      if (std::find(s.begin(), s.end(), v) == s.end()) r.push_back(v);
    const double nu = b + static_cast<double>(c.size()) - 1.0;
    VertexSet prev;  // earlier vertices outside the separator
    for (int v : done)
      if (std::find(s.begin(), s.end(), v) == s.end()) prev.push_back(v);

    if (s.empty()) {
      const Eigen::MatrixXd srr = sample_inverse_wishart(nu, detail::sub(lambda, r, r), rng);
      for (std::size_t x = 0; x < r.size(); ++x)
        for (std::size_t y = 0; y < r.size(); ++y) sig(r[x], r[y]) = srr(x, y);
    } else {
      const Eigen::MatrixXd pss = detail::sub(lambda, s, s);
      const Eigen::MatrixXd psr = detail::sub(lambda, s, r);
      const Eigen::MatrixXd prr = detail::sub(lambda, r, r);
      Eigen::LLT<Eigen::MatrixXd> lp(pss);
      if (lp.info() != Eigen::Success) throw ParameterError("HIW scale is not positive definite");
      const Eigen::MatrixXd mean = lp.solve(psr);
      Eigen::MatrixXd cond = prr - psr.transpose() * mean;
      cond = 0.5 * (cond + cond.transpose());
      const Eigen::MatrixXd srs = sample_inverse_wishart(nu, cond, rng);
      Eigen::LLT<Eigen::MatrixXd> lv(srs);
      Eigen::MatrixXd e(s.size(), r.size());
      for (Eigen::Index x = 0; x < e.rows(); ++x)
        for (Eigen::Index y = 0; y < e.cols(); ++y) e(x, y) = nd(rng);
      // A ~ MN(Psi_SS^{-1} Psi_SR, Psi_SS^{-1}, Sigma_{R.S})
      const Eigen::MatrixXd rowpart = lp.matrixU().solve(e);
      const Eigen::MatrixXd amat = mean + rowpart * Eigen::MatrixXd(lv.matrixL()).transpose();
      const Eigen::MatrixXd sss = detail::sub(sig, s, s);
      const Eigen::MatrixXd ssr = sss * amat;
      Eigen::MatrixXd srr = srs + amat.transpose() * sss * amat;
      srr = 0.5 * (srr + srr.transpose());
      for (std::size_t x = 0; x < s.size(); ++x)
        for (std::size_t y = 0; y < r.size(); ++y) sig(s[x], r[y]) = sig(r[y], s[x]) = ssr(x, y);
      for (std::size_t x = 0; x < r.size(); ++x)
        for (std::size_t y = 0; y < r.size(); ++y) sig(r[x], r[y]) = srr(x, y);
      if (!prev.empty()) {
        const Eigen::MatrixXd srp = amat.transpose() * detail::sub(sig, s, prev);
        for (std::size_t x = 0; x < r.size(); ++x)
          for (std::size_t y = 0; y < prev.size(); ++y) sig(r[x], prev[y]) = sig(prev[y], r[x]) = srp(x, y);
      }
    }
    for (int v : r) done.push_back(v);
  }
  return sig;
}

// Sigma^{-1} assembled from clique and separator blocks; exact zeros off G.
inline Eigen::MatrixXd hiw_precision(const DecomposableGraph& g, const Eigen::MatrixXd& sigma) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(g.m, g.m);
  auto add = [&](const VertexSet& c, double sign) {
    if (c.empty()) return;
    const Eigen::MatrixXd blk = detail::sub(sigma, c, c);
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() != Eigen::Success) throw NumericError("covariance block is not positive definite");
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(c.size(), c.size()));
    for (std::size_t x = 0; x < c.size(); ++x)
      for (std::size_t y = 0; y < c.size(); ++y) k(c[x], c[y]) += sign * inv(x, y);
  };
  for (const auto& c : g.cliques()) add(c, 1.0);
  for (const auto& s : g.separators()) add(s, -1.0);
  return k;
}

struct EdgeFlip {
  int i = -1, j = -1;
  Adjacency adj;
  bool valid = false;
};

// Uniform vertex pair, toggled; valid iff the candidate stays decomposable.
template <class Rng>
EdgeFlip propose_edge_flip(const DecomposableGraph& g, Rng& rng) {
  EdgeFlip f;
  f.adj = g.adj;
  const int pairs = g.m * (g.m - 1) / 2;
  if (pairs == 0) return f;
  int idx = std::uniform_int_distribution<int>(0, pairs - 1)(rng);
  for (int i = 0; i < g.m; ++i) {
    const int row = g.m - 1 - i;
    if (idx < row) {
      f.i = i;
      f.j = i + 1 + idx;
      break;
    }
    idx -= row;
  }
  f.adj(f.i, f.j) = f.adj(f.j, f.i) = 1 - f.adj(f.i, f.j);
  f.valid = is_decomposable(f.adj);
  return f;
}

// Beta-binomial edge prior with the edge probability integrated out.
inline double log_graph_prior(const DecomposableGraph& g) {
  const double big_m = 0.5 * g.m * (g.m - 1);
  const double e = g.edges();
  return std::lgamma(1 + e) + std::lgamma(1 + big_m - e) - std::lgamma(2 + big_m);
}

}  // namespace bvsgcr
