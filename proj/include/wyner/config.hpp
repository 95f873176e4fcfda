// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration as a single JSON document. Every key is optional
// and defaults to the MoG setting; unknown keys are rejected.
//
//   {
//     "model_kind": "wyner",
//     "dataset": {"n_train": 50000, "n_test": 10000, "seed": 0},
//     "latent_dims": {"z": 10, "u": 10, "v": 10},
//     "hidden": {"width": 256, "depth": 3, "activation": "relu"},
//     "lambda": 0.05, "beta": 1.0, "beta_ib": 0.1, "alpha_jmvae": 1.0,
//     "mu_mix": 0.5, "vcca_direction": "bi",
//     "schedule": {"joint_epochs": 500, "marginal_epochs": 50,
//                  "batch_size": 100, "eval_every": 10},
//     "optimizer": {"lr": 1e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
//     "seeds": [0],
//     "importance_samples": 100,
//     "eval_rows": 0,
//     "output_dir": "runs/default"
//   }
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wyner/mog.hpp"
#include "wyner/models.hpp"
#include "wyner/training.hpp"

namespace wyner {

struct ExperimentConfig {
  ModelSpec model;
  DatasetSpec dataset;
  LossWeights weights;
  Schedule schedule;
  AdamConfig optimizer;
  std::vector<std::uint64_t> seeds{0};
  std::size_t importance_samples = 100;
  /// Test rows used by periodic and final evaluation; 0 means the whole split.
  std::size_t eval_rows = 0;
  std::string output_dir = "runs/default";
};

/// Parses and validates a JSON document. Throws ConfigInvalid.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON with every field present; parse_config(to_json(c)) == c.
std::string to_json(const ExperimentConfig& config);
void validate(const ExperimentConfig& config);

/// ModelSpec alone, as stored in checkpoints.
std::string model_spec_json(const ModelSpec& spec);
ModelSpec parse_model_spec(const std::string& json_text);

/// Training settings for one seed of an experiment.
TrainConfig train_config(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace wyner
