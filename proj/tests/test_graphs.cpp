#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include <bvsgcr/graphs.hpp>

#include "stat_helpers.hpp"

using namespace bvsgcr;

namespace {

Adjacency chain(int m) {
  Adjacency a = Adjacency::Identity(m, m);
  for (int i = 0; i + 1 < m; ++i) a(i, i + 1) = a(i + 1, i) = 1;
  return a;
}

Adjacency cycle4() {
  Adjacency a = chain(4);
  a(0, 3) = a(3, 0) = 1;
  return a;
}

Eigen::MatrixXd spd3() {
  Eigen::MatrixXd l(3, 3);
  l << 2.0, 0.3, -0.4, 0.3, 1.5, 0.2, -0.4, 0.2, 1.0;
  return l;
}

}  // namespace

TEST(Decomposable, Basics) {
  for (int m = 1; m <= 6; ++m) EXPECT_TRUE(is_decomposable(Adjacency::Ones(m, m)));
  EXPECT_FALSE(is_decomposable(cycle4()));
  EXPECT_TRUE(is_decomposable(chain(6)));
  Adjacency c4chord = cycle4();
  c4chord(0, 2) = c4chord(2, 0) = 1;
  EXPECT_TRUE(is_decomposable(c4chord));
}

TEST(Decomposable, RejectsMalformedAdjacency) {
  Adjacency a = chain(3);
  a(0, 1) = 0;
  EXPECT_THROW(is_decomposable(a), StructuralError);
  Adjacency b = chain(3);
  b(1, 1) = 0;
  EXPECT_THROW(is_decomposable(b), StructuralError);
}

TEST(JunctionTree, ChainOfThree) {
  const auto jt = junction_tree(chain(3));
  ASSERT_EQ(jt.cliques.size(), 2u);
  EXPECT_EQ(jt.cliques[0], (VertexSet{0, 1}));
  EXPECT_EQ(jt.cliques[1], (VertexSet{1, 2}));
  ASSERT_EQ(jt.separators.size(), 1u);
  EXPECT_EQ(jt.separators[0], (VertexSet{1}));
}

TEST(JunctionTree, EmptyGraph) {
  const auto jt = junction_tree(Adjacency::Identity(3, 3));
  ASSERT_EQ(jt.cliques.size(), 3u);
  for (int v = 0; v < 3; ++v) EXPECT_EQ(jt.cliques[v], (VertexSet{v}));
  ASSERT_EQ(jt.separators.size(), 2u);
  EXPECT_TRUE(jt.separators[0].empty());
  EXPECT_TRUE(jt.separators[1].empty());
}

TEST(JunctionTree, ChainOfSix) {
  const auto jt = junction_tree(chain(6));
  EXPECT_EQ(jt.cliques.size(), 5u);
  for (const auto& c : jt.cliques) EXPECT_EQ(c.size(), 2u);
  ASSERT_EQ(jt.separators.size(), 4u);
  for (const auto& s : jt.separators) EXPECT_EQ(s.size(), 1u);
}

TEST(JunctionTree, NonDecomposableIsContractViolation) {
  EXPECT_THROW(junction_tree(cycle4()), ContractViolation);
}

TEST(HiwNorm, UnivariateMatchesQuadrature) {
  // 1/norm = int_0^inf s^{-(b/2+1)} exp(-lambda/(2s)) ds
  boost::math::quadrature::exp_sinh<double> q;
  for (double b : {2.0, 3.5, 7.0})
    for (double lam : {1.0, 0.4, 3.0}) {
      const double integral = q.integrate([&](double s) { return s > 0 ? std::exp(-(b / 2 + 1) * std::log(s) - lam / (2 * s)) : 0.0; });
      Eigen::MatrixXd l(1, 1);
      l(0, 0) = lam;
      EXPECT_NEAR(hiw_log_norm(DecomposableGraph::empty(1), b, l), -std::log(integral), 1e-10);
    }
}

TEST(HiwNorm, EmptyGraphFactorizes) {
  Eigen::MatrixXd l(2, 2);
  l << 1.7, 0.4, 0.4, 0.6;
  const double want = iw_log_norm(3.0, l.block(0, 0, 1, 1)) + iw_log_norm(3.0, l.block(1, 1, 1, 1));
  EXPECT_NEAR(hiw_log_norm(DecomposableGraph::empty(2), 3.0, l), want, 1e-12);
}

TEST(HiwNorm, CompleteGraphIsInverseWishart) {
  // frozen: -3(b+2)/2 log 2 - log Gamma_3(2) at b=2, Lambda=I
  const double frozen = -5.755195674498527;
  EXPECT_NEAR(hiw_log_norm(DecomposableGraph::complete(3), 2.0, Eigen::MatrixXd::Identity(3, 3)), frozen, 1e-10);
  EXPECT_NEAR(iw_log_norm(2.0, Eigen::MatrixXd::Identity(3, 3)), frozen, 1e-10);
}

TEST(HiwNorm, NonPdScaleIsParameterError) {
  Eigen::MatrixXd l(2, 2);
  l << 1, 2, 2, 1;
  EXPECT_THROW(hiw_log_norm(DecomposableGraph::complete(2), 2.0, l), ParameterError);
}

TEST(MarginalLatents, EmptySampleIsZero) {
  EXPECT_EQ(log_marginal_latents(DecomposableGraph::complete(3), Eigen::MatrixXd(0, 3)), 0.0);
}

TEST(MarginalLatents, UnivariateClosedForm) {
  // sigma ~ IGam(1, 1/2): p(w) = (2 pi)^{-n/2} (1/2) Gamma(1+n/2) / ((1+S)/2)^{1+n/2}
  Eigen::MatrixXd w(4, 1);
  w << 0.3, -1.2, 0.8, 2.0;
  const double s = w.squaredNorm(), n = 4;
  const double want = -0.5 * n * std::log(2 * std::numbers::pi) + std::log(0.5) + std::lgamma(1 + n / 2) -
                      (1 + n / 2) * std::log((1 + s) / 2);
  EXPECT_NEAR(log_marginal_latents(DecomposableGraph::empty(1), w), want, 1e-12);
}

TEST(MarginalLatents, CandidateIdentity) {
  // log p(W|G) = log N(W|Sigma) + log HIW(Sigma|2,I) - log HIW(Sigma|2+n, I+W'W) for any Sigma on G
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd w(7, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
  for (const Adjacency& a : {Adjacency(Adjacency::Ones(3, 3)), chain(3), Adjacency(Adjacency::Identity(3, 3))}) {
    const auto g = DecomposableGraph::from_adjacency(a);
    const Eigen::MatrixXd sig = sample_hiw(g, 4.0, spd3(), rng);
    const Eigen::MatrixXd k = hiw_precision(g, sig);
    double ll = -0.5 * w.rows() * (3 * kLog2Pi - std::log(k.determinant()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) ll -= 0.5 * w.row(i) * k * w.row(i).transpose();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
    const double want = ll + hiw_log_density(g, sig, 2.0, id) - hiw_log_density(g, sig, 2.0 + w.rows(), id + w.transpose() * w);
    EXPECT_NEAR(log_marginal_latents(g, w), want, 1e-9);
  }
}

TEST(SampleHiw, EmptyGraphIsDiagonal) {
  std::mt19937_64 rng(4);
  const auto g = DecomposableGraph::empty(3);
  for (int r = 0; r < 50; ++r) {
    const Eigen::MatrixXd s = sample_hiw(g, 3.0, spd3(), rng);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) EXPECT_EQ(s(a, b), 0.0);
  }
}

TEST(SampleHiw, CompleteGraphMarginalIsInverseGamma) {
  // Sigma_11 ~ IGam(b/2, Lambda_11/2)
  std::mt19937_64 rng(8);
  const double b = 5.0;
  const auto g = DecomposableGraph::complete(3);
  std::vector<double> x(10000);
  for (auto& v : x) v = sample_hiw(g, b, spd3(), rng)(0, 0);
  boost::math::inverse_gamma_distribution<double> ig(b / 2, spd3()(0, 0) / 2);
  EXPECT_GT(testutil::ks_test(x, [&](double v) { return boost::math::cdf(ig, v); }), 1e-3);
}

TEST(SampleHiw, ChainCliqueMeans) {
  // each clique block is IW with mean Lambda_CC / (b - 2)
  std::mt19937_64 rng(6);
  const double b = 7.0;
  const auto g = DecomposableGraph::from_adjacency(chain(3));
  const int n = 100000;
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(3, 3), s2 = Eigen::MatrixXd::Zero(3, 3);
  double kmax = 0;
  for (int r = 0; r < n; ++r) {
    const Eigen::MatrixXd s = sample_hiw(g, b, spd3(), rng);
    s1 += s;
    s2 += s.cwiseProduct(s);
    if (r < 200) kmax = std::max(kmax, std::abs(s.inverse()(0, 2)) / s.inverse().cwiseAbs().maxCoeff());
  }
  const Eigen::MatrixXd mean = s1 / n;
  const Eigen::MatrixXd se = ((s2 / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 3; ++c)
      if (std::abs(a - c) <= 1) EXPECT_NEAR(mean(a, c), spd3()(a, c) / (b - 2), 3 * se(a, c)) << a << "," << c;
  EXPECT_LT(kmax, 1e-10);
}

TEST(SampleHiw, PrecisionHasExactZeros) {
  std::mt19937_64 rng(12);
  Adjacency a = chain(5);
  a(1, 3) = a(3, 1) = 1;
  const auto g = DecomposableGraph::from_adjacency(a);
  Eigen::MatrixXd lam = Eigen::MatrixXd::Identity(5, 5) * 2 + Eigen::MatrixXd::Constant(5, 5, 0.3);
  for (int r = 0; r < 20; ++r) {
    const Eigen::MatrixXd s = sample_hiw(g, 3.0, lam, rng);
    const Eigen::MatrixXd k = hiw_precision(g, s);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (!a(i, j)) EXPECT_EQ(k(i, j), 0.0);
    EXPECT_LT((k * s - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SampleHiw, DegenerateScaleIsParameterError) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_hiw(DecomposableGraph::complete(2), 3.0, Eigen::MatrixXd::Zero(2, 2), rng), ParameterError);
}

TEST(EdgeFlip, ClosingTriangleIsValid) {
  std::mt19937_64 rng(1);
  const auto g = DecomposableGraph::from_adjacency(chain(3));
  bool seen = false;
  for (int r = 0; r < 200 && !seen; ++r) {
    const EdgeFlip f = propose_edge_flip(g, rng);
    if (f.i == 0 && f.j == 2) {
      seen = true;
      EXPECT_TRUE(f.valid);
      EXPECT_EQ(f.adj, Adjacency(Adjacency::Ones(3, 3)));
    }
  }
  EXPECT_TRUE(seen);
}

TEST(EdgeFlip, ClosingChordlessCycleIsInvalid) {
  std::mt19937_64 rng(2);
  const auto g = DecomposableGraph::from_adjacency(chain(4));
  bool seen = false;
  for (int r = 0; r < 500 && !seen; ++r) {
    const EdgeFlip f = propose_edge_flip(g, rng);
    if (f.i == 0 && f.j == 3) {
      seen = true;
      EXPECT_FALSE(f.valid);
    }
  }
  EXPECT_TRUE(seen);
}

TEST(EdgeFlip, PairsAreUniform) {
  std::mt19937_64 rng(3);
  const auto g = DecomposableGraph::empty(4);
  std::vector<double> count(6, 0.0);
  const int n = 60000;
  for (int r = 0; r < n; ++r) {
    const EdgeFlip f = propose_edge_flip(g, rng);
    int idx = 0;
    for (int i = 0; i < f.i; ++i) idx += 3 - i;
    count[idx + f.j - f.i - 1] += 1;
  }
  EXPECT_GT(testutil::chisq_pvalue(count, std::vector<double>(6, n / 6.0)), 1e-3);
}

TEST(GraphPrior, SumsToOneOverThreeVertexGraphs) {
  double total = 0;
  for (int mask = 0; mask < 8; ++mask) {
    Adjacency a = Adjacency::Identity(3, 3);
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    int e = 0;
    for (int t = 0; t < 3; ++t)
      if (mask >> t & 1) {
        a(pairs[t][0], pairs[t][1]) = a(pairs[t][1], pairs[t][0]) = 1;
        ++e;
      }
    const auto g = DecomposableGraph::from_adjacency(a);
    const double lb = std::lgamma(1.0 + e) + std::lgamma(4.0 - e) - std::lgamma(5.0);
    EXPECT_NEAR(log_graph_prior(g), lb, 1e-12);
    total += std::exp(log_graph_prior(g));
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(GraphPrior, EmptySixVertexGraph) {
  EXPECT_NEAR(log_graph_prior(DecomposableGraph::empty(6)), -std::log(16.0), 1e-12);
}
