// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc evaluation: the closed-form common-information estimate and
// log-domain likelihood estimators (importance sampling and naive Monte Carlo).
//
// Batched estimators take a [rows, dim] block of pairs and return one
// log-likelihood per row. Noise blocks have rows * S rows; row r * S + s holds
// the s-th draw for pair r. Which `LatentNoise` fields are read depends on the
// estimator and model kind:
//   joint, three-latent kinds   z u v       (z is w for JVAE/JMVAE)
//   conditional x -> y          z, then v   (CVAE: z holds v; VIB: z)
//   conditional y -> x          z, then u
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "wyner/losses.hpp"
#include "wyner/models.hpp"
#include "wyner/rng.hpp"
#include "wyner/tensor.hpp"

namespace wyner {

enum class Direction { kXToY, kYToX };

struct EvalReport {
  std::optional<double> joint_nll;
  std::optional<double> cond_nll_x2y;
  std::optional<double> cond_nll_y2x;
  std::optional<double> mi_z;
  std::size_t n_importance = 0;
  std::size_t n_eval = 0;
};

/// Half the summed prior log-variances minus the average half-sum of joint
/// posterior log-variances. Needs a joint encoder (Wyner, JVAE, JMVAE).
double mi_estimate(const Model& model, const Tensor& x, const Tensor& y);

/// Standard-normal noise for `rows` pairs with `samples` draws each.
LatentNoise draw_eval_noise(const ModelSpec& spec, std::size_t rows, std::size_t samples, Rng& rng);

std::vector<double> joint_ll_is(const Model& model, const Tensor& x, const Tensor& y,
                                std::size_t samples, const LatentNoise& noise);
std::vector<double> joint_ll_mc(const Model& model, const Tensor& x, const Tensor& y,
                                std::size_t samples, const LatentNoise& noise);
std::vector<double> cond_ll_is(const Model& model, const Tensor& x, const Tensor& y,
                               Direction direction, std::size_t samples, const LatentNoise& noise);
std::vector<double> cond_ll_mc(const Model& model, const Tensor& x, const Tensor& y,
                               Direction direction, std::size_t samples, const LatentNoise& noise);

/// Same estimators drawing their own noise from `rng`, chunked over rows.
std::vector<double> joint_ll_is(const Model& model, const Tensor& x, const Tensor& y,
                                std::size_t samples, Rng& rng);
std::vector<double> joint_ll_mc(const Model& model, const Tensor& x, const Tensor& y,
                                std::size_t samples, Rng& rng);
std::vector<double> cond_ll_is(const Model& model, const Tensor& x, const Tensor& y,
                               Direction direction, std::size_t samples, Rng& rng);
std::vector<double> cond_ll_mc(const Model& model, const Tensor& x, const Tensor& y,
                               Direction direction, std::size_t samples, Rng& rng);

/// Whether a metric is defined for a model kind.
bool has_joint_likelihood(ModelKind kind);
bool has_conditional(ModelKind kind, Direction direction);
bool has_mi(ModelKind kind);

struct EvalOptions {
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  bool joint = true;
  bool cond_x2y = true;
  bool cond_y2x = true;
  bool mi = true;
};

/// Negative mean log-likelihoods (nats per pair) for every metric that is
/// requested, defined for the kind, and whose marginal encoder is ready.
/// Each metric draws from its own named substream of `options.seed`.
EvalReport evaluate(const Model& model, const Tensor& x, const Tensor& y,
                    const EvalOptions& options);

}  // namespace wyner
