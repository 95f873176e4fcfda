// SPDX-License-Identifier: Apache-2.0
//
// Diagonal Gaussians parameterized by (mean, log-variance).
//
// Two flavours share the same formulas: `DiagGaussian` holds plain vectors for
// evaluation code, and `GaussianVar` holds tape handles for batched,
// differentiable use inside losses (one Gaussian per row).
#pragma once

#include <span>
#include <vector>

#include "wyner/tensor.hpp"

namespace wyner {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

class DiagGaussian {
 public:
  /// Log-variances are clamped to [kLogVarMin, kLogVarMax].
  DiagGaussian(std::vector<double> mean, std::vector<double> log_var);

  static DiagGaussian standard(std::size_t dim);

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& log_var() const { return log_var_; }

 private:
  std::vector<double> mean_;
  std::vector<double> log_var_;
};

double log_prob(const DiagGaussian& g, std::span<const double> x);
/// Closed-form KL(q || p).
double kl(const DiagGaussian& q, const DiagGaussian& p);
/// mean + exp(log_var / 2) * eps.
std::vector<double> rsample(const DiagGaussian& g, std::span<const double> eps);

/// Row-batched Gaussian on a tape. `mean` is [rows, d]; `log_var` is [rows, d]
/// or a single [d] row shared by every row (priors).
struct GaussianVar {
  Var mean;
  Var log_var;
};

/// Per-row log density, [rows, 1].
Var log_prob(const GaussianVar& g, Var x);
/// Per-row closed-form KL(q || p), [rows, 1]. Either side may be a shared row.
Var kl(const GaussianVar& q, const GaussianVar& p);
/// Per-row KL(q || N(0, diag(exp(prior_log_var)))), [rows, 1].
Var kl_to_zero_mean(const GaussianVar& q, Var prior_log_var);
/// Reparameterized sample; `eps` is a constant [rows, d] noise block.
Var rsample(const GaussianVar& g, Var eps);

}  // namespace wyner
