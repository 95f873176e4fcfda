// SPDX-License-Identifier: Apache-2.0
#include "wyner/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace wyner {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

void require_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) + " vs " +
                            std::to_string(b));
  }
}

}  // namespace

DiagGaussian::DiagGaussian(std::vector<double> mean, std::vector<double> log_var)
    : mean_(std::move(mean)), log_var_(std::move(log_var)) {
  require_dim(mean_.size(), log_var_.size(), "DiagGaussian");
  if (mean_.empty()) throw DimensionMismatch("DiagGaussian: dimension must be at least 1");
  for (double& lv : log_var_) lv = std::clamp(lv, kLogVarMin, kLogVarMax);
}

DiagGaussian DiagGaussian::standard(std::size_t dim) {
  return DiagGaussian(std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0));
}

double log_prob(const DiagGaussian& g, std::span<const double> x) {
  require_dim(g.dim(), x.size(), "log_prob");
  double total = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - g.mean()[j];
    total += -kHalfLog2Pi - 0.5 * g.log_var()[j] - d * d * 0.5 * std::exp(-g.log_var()[j]);
  }
  return total;
}

double kl(const DiagGaussian& q, const DiagGaussian& p) {
  require_dim(q.dim(), p.dim(), "kl");
  double total = 0.0;
  for (std::size_t j = 0; j < q.dim(); ++j) {
    const double d = q.mean()[j] - p.mean()[j];
    const double lq = q.log_var()[j];
    const double lp = p.log_var()[j];
    total += 0.5 * (std::exp(lq - lp) + d * d * std::exp(-lp) - (lq - lp) - 1.0);
  }
  return total;
}

std::vector<double> rsample(const DiagGaussian& g, std::span<const double> eps) {
  require_dim(g.dim(), eps.size(), "rsample");
  std::vector<double> out(g.dim());
  for (std::size_t j = 0; j < g.dim(); ++j) {
    out[j] = g.mean()[j] + std::exp(0.5 * g.log_var()[j]) * eps[j];
  }
  return out;
}

// ---- tape versions -------------------------------------------------------

Var log_prob(const GaussianVar& g, Var x) {
  require_dim(g.mean.value().cols(), x.value().cols(), "log_prob");
  Var diff = sub(x, g.mean);
  Var quad = mul(square(diff), exp(neg(g.log_var)));
  // -0.5 * (log_var + quad) - 0.5 ln(2 pi), summed per row.
  Var per_dim = add_scalar(scale(add(g.log_var, quad), -0.5), -kHalfLog2Pi);
  return row_sum(per_dim);
}

Var kl(const GaussianVar& q, const GaussianVar& p) {
  require_dim(q.mean.value().cols(), p.mean.value().cols(), "kl");
  Var var_ratio = exp(sub(q.log_var, p.log_var));
  Var mahal = mul(square(sub(q.mean, p.mean)), exp(neg(p.log_var)));
  Var per_dim = sub(add(var_ratio, mahal), add_scalar(sub(q.log_var, p.log_var), 1.0));
  return scale(row_sum(per_dim), 0.5);
}

Var kl_to_zero_mean(const GaussianVar& q, Var prior_log_var) {
  require_dim(q.mean.value().cols(), prior_log_var.value().cols(), "kl");
  Var var_ratio = exp(sub(q.log_var, prior_log_var));
  Var mahal = mul(square(q.mean), exp(neg(prior_log_var)));
  Var per_dim = sub(add(var_ratio, mahal), add_scalar(sub(q.log_var, prior_log_var), 1.0));
  return scale(row_sum(per_dim), 0.5);
}

Var rsample(const GaussianVar& g, Var eps) {
  require_dim(g.mean.value().cols(), eps.value().cols(), "rsample");
  return add(g.mean, mul(exp(scale(g.log_var, 0.5)), eps));
}

}  // namespace wyner
