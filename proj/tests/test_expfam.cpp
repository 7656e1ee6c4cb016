#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <cmath>

using namespace evkf;
using namespace evkf::test;

namespace {

const Family kAllFamilies[] = {Family::GaussianDense, Family::GaussianDiag,
                               Family::ContinuousBernoulli, Family::Gamma};

NaturalParams std_normal_diag() {
  Vec l(2);
  l << 0.0, -0.5;
  return {{Family::GaussianDiag, 1}, l};
}

NaturalParams gamma1d(double shape, double rate) {
  Vec l(2);
  l << shape - 1.0, -rate;
  return {{Family::Gamma, 1}, l};
}

NaturalParams cb1d(double eta) {
  Vec l(1);
  l << eta;
  return {{Family::ContinuousBernoulli, 1}, l};
}

}  // namespace

TEST_CASE("log_partition matches closed forms and quadrature") {
  // standard normal: A(0,-1/2) = log(2*pi)/2 so that log-density at 0 is -log(2*pi)/2
  CHECK(log_partition(std_normal_diag()) == doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK(log_density(std_normal_diag(), Vec::Zero(1)) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));

  // CB at eta=0 is the uniform: A -> 0 through the series branch, log-density 0
  CHECK(cb_log_partition(0.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(log_density(cb1d(0.0), 0.37 * Vec::Ones(1)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cb_log_partition(5e-5) == doctest::Approx(std::log(std::expm1(5e-5) / 5e-5)).epsilon(1e-12));

  // Gamma(shape 3, rate 2): A = lgamma(3) - 3 log 2, checked against quadrature of
  // the unnormalized density z^2 exp(-2z)
  const double a_closed = log_partition(gamma1d(3.0, 2.0));
  CHECK(a_closed == doctest::Approx(std::log(2.0) - 3.0 * std::log(2.0)).epsilon(1e-12));
  const double z_quad =
      simpson([](double z) { return z * z * std::exp(-2.0 * z); }, 1e-12, 40.0, 40000);
  CHECK(a_closed == doctest::Approx(std::log(z_quad)).epsilon(1e-9));
}

TEST_CASE("mean_from_natural closed forms") {
  {
    Vec l(2);
    l << 0.0, -0.5;
    NaturalParams p{{Family::GaussianDense, 1}, l};
    const MeanParams mu = mean_from_natural(p);
    CHECK(mu.mu[0] == doctest::Approx(0.0));
    CHECK(mu.mu[1] == doctest::Approx(1.0));
  }
  CHECK(cb_mean(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  {
    // L=2, m=(1,2), P=I: E[zz^T] = P + mm^T = [[2,2],[2,5]]
    Vec m(2);
    m << 1.0, 2.0;
    const NaturalParams p = gaussian_natural(m, Mat::Identity(2, 2));
    const MeanParams mu = mean_from_natural(p);
    Vec want(6);
    want << 1.0, 2.0, 2.0, 2.0, 2.0, 5.0;
    CHECK((mu.mu - want).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("natural_from_mean closed forms and spec cases") {
  {
    Vec mu(2);
    mu << 0.0, 1.0;
    const NaturalParams p = natural_from_mean({{Family::GaussianDiag, 1}, mu});
    CHECK(p.lambda[0] == doctest::Approx(0.0));
    CHECK(p.lambda[1] == doctest::Approx(-0.5));
  }
  {
    Vec mu(1);
    mu << 0.5;
    const NaturalParams p = natural_from_mean({{Family::ContinuousBernoulli, 1}, mu});
    CHECK(std::abs(p.lambda[0]) < 1e-8);
  }
  {
    const MeanParams mu = mean_from_natural(gamma1d(3.0, 2.0));
    const NaturalParams back = natural_from_mean(mu);
    CHECK(back.lambda[0] + 1.0 == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(-back.lambda[1] == doctest::Approx(2.0).epsilon(1e-6));
  }
}

TEST_CASE("duality roundtrip on random parameters") {
  Rng rng(20240811);
  for (Family fam : kAllFamilies) {
    for (int trial = 0; trial < 1000; ++trial) {
      const int dim = 1 + static_cast<int>(rng.next_u64() % 3);
      const NaturalParams p = random_natural(fam, dim, rng);
      const NaturalParams back = natural_from_mean(mean_from_natural(p));
      const double err = (back.lambda - p.lambda).norm() / std::max(1.0, p.lambda.norm());
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("gradient identity: mean params match finite differences of A") {
  Rng rng(7);
  for (Family fam : kAllFamilies) {
    for (int trial = 0; trial < 12; ++trial) {
      const int dim = 1 + static_cast<int>(rng.next_u64() % 2);
      const NaturalParams p = random_natural(fam, dim, rng);
      const MeanParams mu = mean_from_natural(p);
      for (int k = 0; k < p.lambda.size(); ++k) {
        auto a_of = [&](double x) {
          NaturalParams q = p;
          q.lambda[k] = x;
          return log_partition(q);
        };
        const double fd = central_diff(a_of, p.lambda[k], 1e-6 * std::max(1.0, std::abs(p.lambda[k])));
        CHECK(rel_err(mu.mu[k], fd, 1e-4) < 1e-5);
      }
    }
  }
}

TEST_CASE("sampling consistency: empirical t(z) within 5 standard errors") {
  Rng rng(99);
  const int n = 100000;
  for (Family fam : kAllFamilies) {
    const NaturalParams p = random_natural(fam, 2, rng);
    const MeanParams mu = mean_from_natural(p);
    const Mat draws = sample(p, n, rng);
    const int d = p.tag.stat_dim();
    Vec acc = Vec::Zero(d), acc2 = Vec::Zero(d);
    for (int s = 0; s < n; ++s) {
      const Vec t = sufficient_stats(p.tag, draws.row(s).transpose());
      acc += t;
      acc2 += t.cwiseProduct(t);
    }
    const Vec emp = acc / n;
    for (int k = 0; k < d; ++k) {
      const double var = std::max(acc2[k] / n - emp[k] * emp[k], 1e-12);
      const double se = std::sqrt(var / n);
      CHECK(std::abs(emp[k] - mu.mu[k]) < 5.0 * se + 1e-9);
    }
  }
}

TEST_CASE("sample means for the spec's three reference laws") {
  Rng rng(3);
  const int n = 100000;
  const double band = 4.0 / std::sqrt(double(n));
  CHECK(std::abs(sample(std_normal_diag(), n, rng).col(0).mean()) < band);
  CHECK(std::abs(sample(cb1d(0.0), n, rng).col(0).mean() - 0.5) <
        band * std::sqrt(1.0 / 12.0) * 4.0);
  const double gmean = sample(gamma1d(3.0, 2.0), n, rng).col(0).mean();
  CHECK(std::abs(gmean - 1.5) < 5.0 * std::sqrt(3.0 / 4.0 / n));
}

TEST_CASE("entropy closed forms") {
  CHECK(entropy(std_normal_diag()) == doctest::Approx(0.5 * std::log(2.0 * M_PI * M_E)).epsilon(1e-12));
  CHECK(entropy(cb1d(0.0)) == doctest::Approx(0.0).epsilon(1e-10));
  {
    Vec m(1);
    m << 0.7;
    Mat v(1, 1);
    v << 4.0;
    const NaturalParams p = gaussian_natural(m, v);
    CHECK(entropy(p) == doctest::Approx(0.5 * std::log(2.0 * M_PI * M_E * 4.0)).epsilon(1e-12));
  }
}

TEST_CASE("kl closed forms and quadrature oracle") {
  const NaturalParams p = std_normal_diag();
  CHECK(kl(p, p) == 0.0);
  {
    Vec m1(1), m0(1);
    m1 << 1.0;
    m0 << 0.0;
    const NaturalParams a = gaussian_natural(m1, Mat::Identity(1, 1));
    const NaturalParams b = gaussian_natural(m0, Mat::Identity(1, 1));
    CHECK(kl(a, b) == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    const NaturalParams a = cb1d(1.0), b = cb1d(0.0);
    const double quad = simpson(
        [&](double z) {
          const double lp = log_density(a, Vec::Constant(1, z));
          const double lq = log_density(b, Vec::Constant(1, z));
          return std::exp(lp) * (lp - lq);
        },
        1e-9, 1.0 - 1e-9, 20000);
    CHECK(kl(a, b) == doctest::Approx(quad).epsilon(1e-7));
  }
}

TEST_CASE("kl nonnegative on random pairs") {
  Rng rng(17);
  for (Family fam : kAllFamilies)
    for (int trial = 0; trial < 200; ++trial) {
      const int dim = 1 + static_cast<int>(rng.next_u64() % 3);
      const NaturalParams p = random_natural(fam, dim, rng);
      const NaturalParams q = random_natural(fam, dim, rng);
      CHECK(kl(p, q) >= -1e-10);
      CHECK(kl(p, p) == 0.0);
    }
}

TEST_CASE("log partition is convex") {
  Rng rng(23);
  for (Family fam : kAllFamilies)
    for (int trial = 0; trial < 200; ++trial) {
      const int dim = 1 + static_cast<int>(rng.next_u64() % 2);
      const NaturalParams a = random_natural(fam, dim, rng);
      const NaturalParams b = random_natural(fam, dim, rng);
      const double w = rng.uniform();
      NaturalParams mid = a;
      mid.lambda = w * a.lambda + (1.0 - w) * b.lambda;
      if (!is_valid(mid)) continue;  // gamma domain is convex but the margin can clip
      CHECK(log_partition(mid) <= w * log_partition(a) + (1.0 - w) * log_partition(b) + 1e-10);
    }
}

TEST_CASE("log_density closed forms and normalization") {
  {
    Vec m(1), z(1);
    m << 1.0;
    z << 3.0;
    Mat v(1, 1);
    v << 4.0;
    const NaturalParams p = gaussian_natural(m, v);
    CHECK(log_density(p, z) == doctest::Approx(-0.5 * std::log(8.0 * M_PI) - 0.5).epsilon(1e-12));
  }
  // out of support
  CHECK(std::isinf(log_density(cb1d(2.0), Vec::Constant(1, 1.5))));
  CHECK(log_density(cb1d(2.0), Vec::Constant(1, 1.5)) < 0.0);
  CHECK(std::isinf(log_density(gamma1d(2.0, 1.0), Vec::Constant(1, -0.1))));

  Rng rng(41);
  const struct {
    NaturalParams p;
    double lo, hi;
  } cases[] = {
      {std_normal_diag(), -30.0, 30.0},
      {gaussian_natural(Vec::Constant(1, 0.3), Mat::Constant(1, 1, 2.5)), -40.0, 40.0},
      {cb1d(3.0), 0.0, 1.0},
      {cb1d(-6.0), 0.0, 1.0},
      {gamma1d(1.7, 0.8), 1e-12, 80.0},
      {gamma1d(6.0, 3.0), 1e-12, 40.0},
  };
  for (const auto& c : cases) {
    const double total = simpson(
        [&](double z) { return std::exp(log_density(c.p, Vec::Constant(1, z))); }, c.lo, c.hi,
        60000);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("domain violations raise invalid_parameter") {
  Vec l(2);
  l << 0.0, 0.5;  // positive second entry
  CHECK_THROWS_AS(log_partition({{Family::GaussianDiag, 1}, l}), invalid_parameter);

  Vec lg(2);
  lg << -1.5, -1.0;  // shape entry below -1
  CHECK_THROWS_AS(validate({{Family::Gamma, 1}, lg}), invalid_parameter);
  lg << 1.0, 0.5;  // rate entry positive
  CHECK_THROWS_AS(validate({{Family::Gamma, 1}, lg}), invalid_parameter);

  Vec dense(6);
  dense << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;  // positive definite second block
  CHECK_THROWS_AS(validate({{Family::GaussianDense, 2}, dense}), invalid_parameter);

  Vec mu(1);
  mu << 1.2;  // CB mean outside (0,1)
  CHECK_THROWS_AS(natural_from_mean({{Family::ContinuousBernoulli, 1}, mu}), invalid_parameter);

  CHECK_THROWS_AS(kl(std_normal_diag(), cb1d(0.0)), invalid_parameter);
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  Rng a(1234), b(1234), c(1235);
  const NaturalParams p = gamma1d(2.5, 1.5);
  const Mat sa = sample(p, 64, a);
  CHECK(sa == sample(p, 64, b));
  CHECK(sa != sample(p, 64, c));
  Rng parent(7);
  Rng child1 = parent.split();
  Rng child2 = parent.split();
  CHECK(sample(p, 8, child1) != sample(p, 8, child2));
}
