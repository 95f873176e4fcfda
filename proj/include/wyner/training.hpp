// SPDX-License-Identifier: Apache-2.0
//
// Adam and the two-stage schedule: a joint stage on the kind's main
// objective, then (Wyner and JVAE only) one block per side that fits the
// marginal encoder q(z|x) / q(z|y) with priors and decoders frozen.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wyner/estimators.hpp"
#include "wyner/losses.hpp"
#include "wyner/mog.hpp"
#include "wyner/models.hpp"

namespace wyner {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// One bias-corrected Adam update of `params[i]` by `grads[i]`. Moments are
/// keyed by parameter name and created on first use. Throws
/// NonFiniteGradient before touching anything if a gradient is not finite.
void adam_step(AdamState& state, std::span<const NamedParam> params,
               std::span<const Tensor> grads);

struct LossWeights {
  double lambda = 0.05;
  double beta = 1.0;
  double beta_ib = 0.1;
  double alpha = 1.0;
  double mu_mix = 0.5;
  VccaDirection vcca_direction = VccaDirection::kBi;
};

struct Schedule {
  std::size_t joint_epochs = 500;
  std::size_t marginal_epochs = 50;  // per side
  std::size_t batch_size = 100;
  std::size_t eval_every = 10;
};

enum class Stage { kJoint, kMarginalX, kMarginalY };
std::string_view to_string(Stage stage);

struct TrainConfig {
  LossWeights weights;
  Schedule schedule;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Test-split evaluation; `eval.seed` drives the estimator noise.
  EvalOptions eval;
  /// Rows of the test split used for test-loss and estimator rows (0 = all).
  std::size_t eval_rows = 0;
  bool evaluate = true;
};

/// One evaluation event. Train rows carry the epoch's batch-averaged loss;
/// test rows carry the test-split loss plus the estimator metrics.
struct MetricsRow {
  std::size_t epoch = 0;
  Stage stage = Stage::kJoint;
  std::string split;
  LossBreakdown loss;
  std::optional<double> mi_z;
  std::optional<double> joint_nll;
  std::optional<double> cond_nll_x2y;
  std::optional<double> cond_nll_y2x;
  double wall_seconds = 0.0;
};

/// Whether a parameter is updated by `stage` for this kind.
bool stage_trains(ModelKind kind, Stage stage, std::string_view param);

/// The objective optimized by `stage`, built on `binder`.
Loss stage_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
                Stage stage, const LossWeights& weights, const LatentNoise& noise);

/// Batch-size weighted mean of the stage loss over a split, without
/// gradients. Noise comes from `rng`.
LossBreakdown split_loss(const Model& model, const PairSet& split, Stage stage,
                         const LossWeights& weights, std::size_t batch_size, Rng& rng);

/// Joint stage. Emits an epoch-0 test row, one train row per epoch and a test
/// row every `eval_every` epochs and at the last epoch. On a non-finite loss
/// the model is restored to the last completed epoch and DivergenceDetected
/// is thrown.
std::vector<MetricsRow> train_joint(Model& model, const PairDataset& data,
                                    const TrainConfig& config);

/// Marginal stages (x side, then y side). Throws NotApplicable for kinds
/// other than Wyner and JVAE and FrozenParamTouched if anything outside the
/// stage's trainable set changed.
std::vector<MetricsRow> train_marginals(Model& model, const PairDataset& data,
                                        const TrainConfig& config);

/// Order-sensitive FNV-1a hash over parameter names and bit patterns.
std::uint64_t parameter_hash(const Model& model,
                             const std::function<bool(std::string_view)>& filter = {});

}  // namespace wyner
