#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <bvsgcr/marginals.hpp>

using namespace bvsgcr;

namespace {

// independent pmfs (lgamma only, no incomplete beta)
double nb_pmf(double r, double eta, long y) {
  const double p = (1 + std::exp(eta)) / (2 + std::exp(eta));
  return std::exp(std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1.0) + r * std::log(p) + y * std::log1p(-p));
}
double binom_pmf(int n, double eta, long y) {
  const double pi = 1 / (1 + std::exp(eta));
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0) + y * std::log(pi) +
                  (n - y) * std::log1p(-pi));
}

}  // namespace

TEST(Cdf, GaussianSymmetry) { EXPECT_DOUBLE_EQ(cdf(Family::gaussian(1), 0, 0), 0.5); }

TEST(Cdf, OrdinalFirstCutpointAtZero) {
  EXPECT_DOUBLE_EQ(cdf(Family::ordinal_from_cutpoints({0.0, 1.3}), 1, 0.0), 0.5);
}

TEST(Cdf, NegBinMatchesPmfSum) {
  // frozen: 30-digit summation of the pmf over 0..3
  const double want = 0.996050227196554674;
  EXPECT_NEAR(cdf(Family::negbin(0.5), 3, 0.0), want, 1e-14);
  double s = 0;
  for (long y = 0; y <= 3; ++y) s += nb_pmf(0.5, 0.0, y);
  EXPECT_NEAR(s, want, 1e-14);
}

TEST(Cdf, ExactAtSupportBoundaries) {
  EXPECT_EQ(cdf(Family::binomial(10), -1, 0.3), 0.0);
  EXPECT_EQ(cdf(Family::binomial(10), 10, 0.3), 1.0);
  EXPECT_EQ(cdf(Family::ordinal(4), 4, 0.3), 1.0);
  EXPECT_EQ(cdf(Family::negbin(2), -1, 0.3), 0.0);
  EXPECT_EQ(sf(Family::bernoulli(), 1, 0.3), 0.0);
}

TEST(Cdf, InvalidParametersThrow) {
  EXPECT_THROW(cdf(Family::gaussian(0.0), 0, 0), ParameterError);
  EXPECT_THROW(cdf(Family::negbin(-1.0), 0, 0), ParameterError);
  EXPECT_THROW(Family::ordinal_from_cutpoints({0.0, 1.0, 0.5}), ParameterError);
  EXPECT_THROW(Family::ordinal_from_cutpoints({0.2, 1.0}), ParameterError);
}

TEST(Cdf, MonotoneInYAndEta) {
  for (const Family& f : {Family::negbin(1.7), Family::binomial(12), Family::ordinal_from_cutpoints({0, 0.4, 2})}) {
    double prev = 0;
    for (long y = f.support_min(); y < 15; ++y) {
      const double c = cdf(f, y, 0.2);
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
  // all families here are location-like in eta with P(Y <= y) increasing in eta
  // (NB / binomial success probabilities shrink with eta)
  for (double eta = -3; eta < 3; eta += 0.5) {
    EXPECT_LE(cdf(Family::negbin(1.7), 2, eta), cdf(Family::negbin(1.7), 2, eta + 0.5));
    EXPECT_LE(cdf(Family::binomial(12), 5, eta), cdf(Family::binomial(12), 5, eta + 0.5));
    EXPECT_GE(cdf(Family::ordinal(4), 2, eta), cdf(Family::ordinal(4), 2, eta + 0.5));
    EXPECT_GE(cdf(Family::gaussian(2), 0.1, eta), cdf(Family::gaussian(2), 0.1, eta + 0.5));
  }
}

TEST(LogDensity, SpecValues) {
  EXPECT_NEAR(log_density(Family::gaussian(1), 0, 0), -0.5 * std::log(2 * M_PI), 1e-15);
  EXPECT_NEAR(log_density(Family::bernoulli(), 1, 0), std::log(0.5), 1e-15);
  // frozen high-precision value for NB(theta=2), eta=1, y=5
  EXPECT_NEAR(log_density(Family::negbin(2), 5, 1.0), -6.4418301532598569545, 1e-12);
  const Family nb = Family::negbin(2);
  EXPECT_NEAR(std::exp(log_density(nb, 5, 1.0)), cdf(nb, 5, 1.0) - cdf(nb, 4, 1.0), 1e-15);
}

TEST(LogDensity, SumsToOne) {
  for (const Family& f : {Family::bernoulli(), Family::ordinal_from_cutpoints({0, 0.5, 1.7}), Family::binomial(10),
                          Family::negbin(0.5), Family::negbin(4.0)}) {
    for (double eta : {-2.0, 0.0, 1.3}) {
      double s = 0;
      for (long y = f.support_min(); y < 2000; ++y) {
        if (f.support_max() >= 0 && y > f.support_max()) break;
        s += std::exp(log_density(f, y, eta));
      }
      EXPECT_NEAR(s, 1.0, 1e-12) << kind_name(f.kind) << " eta=" << eta;
    }
  }
  for (long y = 0; y <= 10; ++y)
    EXPECT_NEAR(std::exp(log_density(Family::binomial(10), y, 0.7)), binom_pmf(10, 0.7, y), 1e-14);
}

TEST(NormalScore, Gaussian) {
  EXPECT_DOUBLE_EQ(normal_score(Family::gaussian(4), 3, 1), 1.0);
  EXPECT_DOUBLE_EQ(normal_score(Family::gaussian(1), 0, 0), 0.0);
  for (double y : {-3.0, -0.2, 1.0, 4.5}) {
    const Family f = Family::gaussian(1);
    EXPECT_NEAR(norm_cdf(normal_score(f, y, 2.0)), cdf(f, y, 2.0), 1e-15);
  }
  EXPECT_THROW(normal_score(Family::bernoulli(), 1, 0), ContractViolation);
}

TEST(LatentBounds, SpecExamples) {
  const Interval b = latent_bounds(Family::bernoulli(), 0, 0.0);
  EXPECT_EQ(b.lo, -kInf);
  EXPECT_EQ(b.hi, 0.0);
  const Interval o = latent_bounds(Family::ordinal_from_cutpoints({0.0, 1.5}), 2, 0.3);
  EXPECT_NEAR(o.lo, -0.3, 1e-15);
  EXPECT_NEAR(o.hi, 1.2, 1e-15);
  const Interval c = latent_bounds(Family::binomial(10), 4, 0.0);
  EXPECT_NEAR(norm_cdf(c.hi) - norm_cdf(c.lo), 0.205078125, 1e-14);  // C(10,4)/2^10
}

TEST(LatentBounds, OutsideSupportIsDataError) {
  EXPECT_THROW(latent_bounds(Family::bernoulli(), 2, 0.0), DataError);
  EXPECT_THROW(latent_bounds(Family::negbin(1), 1.5, 0.0), DataError);
  EXPECT_THROW(latent_bounds(Family::ordinal(3), 0, 0.0), DataError);
  EXPECT_THROW(latent_bounds(Family::gaussian(1), 0, 0.0), ContractViolation);
}

TEST(LatentBounds, TileTheRealLine) {
  for (const Family& f : {Family::bernoulli(), Family::ordinal_from_cutpoints({0, 0.8, 1.1, 3}), Family::binomial(10),
                          Family::negbin(0.5), Family::negbin(3.0)}) {
    for (double eta : {-4.0, -1.0, 0.0, 0.7, 3.0}) {
      double mass = 0, prev_hi = -kInf;
      for (long y = f.support_min();; ++y) {
        if (f.support_max() >= 0 && y > f.support_max()) break;
        const Interval b = latent_bounds(f, y, eta);
        EXPECT_LT(b.lo, b.hi);
        EXPECT_EQ(b.lo, prev_hi) << kind_name(f.kind) << " y=" << y;  // consecutive intervals share endpoints
        prev_hi = b.hi;
        mass += norm_interval(b.lo, b.hi);
        if (f.support_max() < 0 && sf(f, y, eta) < 1e-14) break;
      }
      EXPECT_NEAR(mass, 1.0, 1e-12) << kind_name(f.kind) << " eta=" << eta;
    }
  }
}

TEST(LatentBounds, FarTailUsesSurvivalSide) {
  // P(Y > 40) is ~1e-16 here; the upper bound must stay finite and ordered
  const Family f = Family::negbin(2.0);
  const Interval b = latent_bounds(f, 40, 0.0);
  EXPECT_TRUE(std::isfinite(b.lo));
  EXPECT_TRUE(std::isfinite(b.hi));
  EXPECT_LT(b.lo, b.hi);
  EXPECT_GT(b.lo, 7.0);
}

TEST(InverseCdf, SpecExamples) {
  EXPECT_DOUBLE_EQ(inverse_cdf(Family::gaussian(1), 0.5, 0), 0.0);
  EXPECT_EQ(inverse_cdf(Family::bernoulli(), 0.4, 0), 0.0);
  EXPECT_EQ(inverse_cdf(Family::bernoulli(), 0.6, 0), 1.0);
  EXPECT_EQ(inverse_cdf(Family::negbin(0.5), 0.95, 0), 1.0);  // pmf accumulation crosses 0.95 at y=1
  EXPECT_THROW(inverse_cdf(Family::bernoulli(), 0.0, 0), ParameterError);
  EXPECT_THROW(inverse_cdf(Family::bernoulli(), 1.0, 0), ParameterError);
}

TEST(InverseCdf, BruteForceAccumulation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const double eta = 4 * u(rng) - 2, prob = u(rng);
    const Family nb = Family::negbin(0.3 + 3 * u(rng));
    long y = 0;
    double acc = nb_pmf(nb.theta[0], eta, 0);
    while (acc < prob && y < 100000) acc += nb_pmf(nb.theta[0], eta, ++y);
    EXPECT_EQ(inverse_cdf(nb, prob, eta), static_cast<double>(y));
  }
}

TEST(InverseCdf, RoundTrip) {
  for (const Family& f : {Family::ordinal_from_cutpoints({0, 0.8, 1.1}), Family::binomial(10), Family::negbin(0.5),
                          Family::negbin(6.0)}) {
    for (double eta : {-1.5, 0.0, 1.0}) {
      for (long y = f.support_min(); y < 60; ++y) {
        if (f.support_max() >= 0 && y > f.support_max()) break;
        const double mass = std::exp(log_density(f, y, eta));
        if (mass < 1e-10) continue;
        const double c = cdf(f, y, eta);
        if (c >= 1.0) continue;
        // just above F(y-1) lands on y
        const double below = cdf(f, y - 1, eta);
        EXPECT_EQ(inverse_cdf(f, below + std::min(1e-12, 0.5 * mass), eta), static_cast<double>(y))
            << kind_name(f.kind) << " y=" << y;
        EXPECT_EQ(inverse_cdf(f, c, eta), static_cast<double>(y)) << kind_name(f.kind) << " y=" << y;
      }
    }
  }
}

TEST(QuantileFromScore, UpperTailIsNotRounded) {
  // Phi(9) rounds to 1; the survival form still resolves a finite count
  const double y = quantile_from_score(Family::negbin(2.0), 9.0, 0.0);
  EXPECT_TRUE(std::isfinite(y));
  EXPECT_GT(y, 20.0);
  for (double z : {-2.0, -0.1, 0.3, 1.7}) {
    const Family f = Family::binomial(10);
    const double yy = quantile_from_score(f, z, 0.4);
    const Interval b = latent_bounds(f, yy, 0.4);
    EXPECT_GT(z, b.lo - 1e-12);
    EXPECT_LE(z, b.hi + 1e-12);
  }
}

TEST(Names, RoundTrip) {
  for (Kind k : {Kind::Gaussian, Kind::BernoulliProbit, Kind::OrdinalProbit, Kind::BinomialLogit, Kind::NegBinomialLogit})
    EXPECT_EQ(kind_from_name(kind_name(k)), k);
  EXPECT_THROW(kind_from_name("poisson"), ConfigError);
}
