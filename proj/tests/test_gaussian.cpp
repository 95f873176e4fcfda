// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "wyner/gaussian.hpp"

using namespace wyner;
using wyner::testing::mean_se;
using wyner::testing::random_matrix;

namespace {

// Direct 1-d normal log density, kept apart from the library code.
double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2.0 * var);
}

// Monte-Carlo KL(q || p) for diagonal Gaussians: mean of log q(x) - log p(x)
// over x ~ q.
wyner::testing::MeanSe mc_kl(const DiagGaussian& q, const DiagGaussian& p, std::size_t n, Rng& rng) {
  std::vector<double> ratios(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < q.dim(); ++j) {
      const double qv = std::exp(q.log_var()[j]);
      const double pv = std::exp(p.log_var()[j]);
      const double x = q.mean()[j] + std::sqrt(qv) * rng.normal();
      r += normal_logpdf(x, q.mean()[j], qv) - normal_logpdf(x, p.mean()[j], pv);
    }
    ratios[i] = r;
  }
  return mean_se(ratios);
}

}  // namespace

TEST_CASE("log_prob reference values") {
  const std::vector<double> zero{0.0};
  CHECK(log_prob(DiagGaussian::standard(1), zero) == doctest::Approx(-0.918939).epsilon(1e-6));

  const std::vector<double> mean(10, 1.5);
  const DiagGaussian half(mean, std::vector<double>(10, std::log(0.5)));
  CHECK(log_prob(half, mean) == doctest::Approx(-5.7236).epsilon(1e-5));
  CHECK(log_prob(half, mean) == doctest::Approx(-5.0 * std::log(std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("log_prob is translation invariant") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> mu(4), lv(4), a(4), shifted(4);
    for (int j = 0; j < 4; ++j) {
      mu[j] = 3.0 * rng.normal();
      lv[j] = rng.normal();
      a[j] = rng.normal();
      shifted[j] = mu[j] + a[j];
    }
    const double lhs = log_prob(DiagGaussian(mu, lv), shifted);
    const double rhs = log_prob(DiagGaussian(std::vector<double>(4, 0.0), lv), a);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("dimension mismatches are rejected") {
  const std::vector<double> two{0.0, 0.0};
  CHECK_THROWS_AS(log_prob(DiagGaussian::standard(3), two), DimensionMismatch);
  CHECK_THROWS_AS(kl(DiagGaussian::standard(3), DiagGaussian::standard(2)), DimensionMismatch);
  CHECK_THROWS_AS(rsample(DiagGaussian::standard(3), two), DimensionMismatch);
  CHECK_THROWS_AS(DiagGaussian({0.0}, {0.0, 0.0}), DimensionMismatch);
}

TEST_CASE("log-variance is clamped at construction") {
  const DiagGaussian g({0.0, 0.0}, {-50.0, 50.0});
  CHECK(g.log_var()[0] == kLogVarMin);
  CHECK(g.log_var()[1] == kLogVarMax);
}

TEST_CASE("kl reference values against a Monte-Carlo log-ratio oracle") {
  Rng rng(2);
  const DiagGaussian q1({1.0}, {0.0});
  const DiagGaussian p1({0.0}, {0.0});
  CHECK(kl(q1, p1) == doctest::Approx(0.5).epsilon(1e-12));
  const auto mc1 = mc_kl(q1, p1, 1000000, rng);
  CHECK(std::abs(mc1.mean - 0.5) <= 3.0 * mc1.se);

  const DiagGaussian q2({0.0}, {0.0});
  const DiagGaussian p2({0.0}, {std::log(2.0)});
  const double expected = 0.5 * (std::log(2.0) + 0.5 - 1.0);
  CHECK(kl(q2, p2) == doctest::Approx(0.096574).epsilon(1e-5));
  CHECK(kl(q2, p2) == doctest::Approx(expected).epsilon(1e-12));
  const auto mc2 = mc_kl(q2, p2, 1000000, rng);
  CHECK(std::abs(mc2.mean - expected) <= 3.0 * mc2.se);
}

TEST_CASE("kl is zero on identical arguments and positive otherwise") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> mu(5), lv(5);
    for (int j = 0; j < 5; ++j) {
      mu[j] = 2.0 * rng.normal();
      lv[j] = rng.normal();
    }
    const DiagGaussian g(mu, lv);
    CHECK(kl(g, g) == 0.0);
    std::vector<double> mu2 = mu;
    mu2[trial % 5] += 0.1 + std::abs(rng.normal());
    CHECK(kl(g, DiagGaussian(mu2, lv)) > 0.0);
    std::vector<double> lv2 = lv;
    lv2[trial % 5] -= 0.1 + std::abs(rng.normal());
    CHECK(kl(g, DiagGaussian(mu, lv2)) > 0.0);
  }
}

TEST_CASE("rsample: zero noise, identity transform, moments") {
  const DiagGaussian g({2.0, -1.0}, {0.3, -0.7});
  const std::vector<double> zero{0.0, 0.0};
  CHECK(rsample(g, zero) == g.mean());

  const std::vector<double> eps{0.37, -1.2};
  CHECK(rsample(DiagGaussian::standard(2), eps) == eps);

  Rng rng(4);
  const DiagGaussian n24({2.0}, {std::log(4.0)});
  const std::size_t n = 100000;
  std::vector<double> draws(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> e{rng.normal()};
    draws[i] = rsample(n24, e)[0];
  }
  const auto [m, se] = mean_se(draws);
  CHECK(std::abs(m - 2.0) <= 3.0 * 2.0 / std::sqrt(double(n)));
  const double var = se * se * double(n);
  CHECK(std::abs(var - 4.0) <= 0.03 * 4.0);
}

TEST_CASE("density integrates to one over mean +- 8 sigma") {
  for (const auto& [m, lv] : {std::pair{0.0, 0.0}, std::pair{3.0, std::log(0.25)}, std::pair{-2.0, 2.0}}) {
    const DiagGaussian g({m}, {lv});
    const double sd = std::exp(0.5 * lv);
    const int steps = 20000;
    const double lo = m - 8.0 * sd;
    const double h = 16.0 * sd / steps;
    double area = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const std::vector<double> x{lo + i * h};
      const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
      area += w * std::exp(log_prob(g, x));
    }
    CHECK(std::abs(area * h - 1.0) <= 1e-6);
  }
}

TEST_CASE("batched forms agree with the plain forms") {
  Rng rng(5);
  const Tensor qm = random_matrix(3, 4, rng);
  const Tensor qlv = random_matrix(3, 4, rng, 0.5);
  const Tensor pm = random_matrix(3, 4, rng);
  const Tensor plv = random_matrix(3, 4, rng, 0.5);
  const Tensor x = random_matrix(3, 4, rng);
  const Tensor shared_lv = random_matrix(1, 4, rng, 0.5);
  Tape tape;
  const GaussianVar q{tape.constant(qm), tape.constant(qlv)};
  const GaussianVar p{tape.constant(pm), tape.constant(plv)};
  const Tensor lp = log_prob(q, tape.constant(x)).value();
  const Tensor k = kl(q, p).value();
  const Tensor k0 = kl_to_zero_mean(q, tape.constant(Tensor::row({shared_lv[0], shared_lv[1], shared_lv[2], shared_lv[3]}))).value();
  const Tensor s = rsample(q, tape.constant(x)).value();
  auto row = [](const Tensor& t, std::size_t r) {
    return std::vector<double>(t.raw() + r * t.cols(), t.raw() + (r + 1) * t.cols());
  };
  for (std::size_t r = 0; r < 3; ++r) {
    const DiagGaussian qg(row(qm, r), row(qlv, r));
    const DiagGaussian pg(row(pm, r), row(plv, r));
    const DiagGaussian zg(std::vector<double>(4, 0.0), row(shared_lv, 0));
    CHECK(lp[r] == doctest::Approx(log_prob(qg, row(x, r))).epsilon(1e-12));
    CHECK(k[r] == doctest::Approx(kl(qg, pg)).epsilon(1e-12));
    CHECK(k0[r] == doctest::Approx(kl(qg, zg)).epsilon(1e-12));
    const auto sr = rsample(qg, row(x, r));
    for (std::size_t j = 0; j < 4; ++j) CHECK(s.at(r, j) == doctest::Approx(sr[j]).epsilon(1e-12));
  }
}

TEST_CASE("kl and log_prob gradients match finite differences") {
  Rng rng(6);
  const std::vector<Tensor> params = {random_matrix(2, 3, rng), random_matrix(2, 3, rng, 0.5),
                                      random_matrix(2, 3, rng), random_matrix(2, 3, rng, 0.5)};
  const double kl_err = grad_check(
      [](Tape&, std::span<const Var> p) { return sum(kl(GaussianVar{p[0], p[1]}, GaussianVar{p[2], p[3]})); },
      params);
  CHECK(kl_err <= 1e-6);
  const double lp_err = grad_check(
      [](Tape&, std::span<const Var> p) { return sum(log_prob(GaussianVar{p[0], p[1]}, p[2])); },
      {params[0], params[1], params[2]});
  CHECK(lp_err <= 1e-6);
  const double zm_err = grad_check(
      [](Tape&, std::span<const Var> p) { return sum(kl_to_zero_mean(GaussianVar{p[0], p[1]}, p[2])); },
      {params[0], params[1], random_matrix(1, 3, rng, 0.5)});
  CHECK(zm_err <= 1e-6);
}
