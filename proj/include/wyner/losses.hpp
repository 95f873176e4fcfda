// SPDX-License-Identifier: Apache-2.0
//
// Training objectives as differentiable batch scalars.
//
// Every loss is the batch mean of a per-row loss and takes its reparameterization
// noise from the caller, so a fixed `LatentNoise` makes the loss a deterministic
// function of the parameters. KL terms are always closed-form.
#pragma once

#include <cstddef>

#include "wyner/models.hpp"
#include "wyner/rng.hpp"
#include "wyner/tensor.hpp"

namespace wyner {

/// Named loss terms. `total` is accumulated on the tape in field order, so
/// total == rec_x + rec_y + reg_z + reg_u + reg_v + mi_term + extras holds
/// exactly in left-to-right double arithmetic. Absent terms are 0.
struct LossBreakdown {
  double total = 0.0;
  double rec_x = 0.0;
  double rec_y = 0.0;
  double reg_z = 0.0;
  double reg_u = 0.0;
  double reg_v = 0.0;
  double mi_term = 0.0;
  double extras = 0.0;
};

struct Loss {
  Var total;
  LossBreakdown parts;
};

/// Standard-normal reparameterization noise, one [rows, dim] block per latent.
/// Single-latent kinds use `z` for their latent (w for JVAE/JMVAE, v for CVAE);
/// `z_alt` is the second common draw of the bidirectional VCCA loss.
struct LatentNoise {
  Tensor z;
  Tensor u;
  Tensor v;
  Tensor z_alt;
};

/// Noise blocks shaped for `spec.kind`, drawn in a fixed order from `rng`.
LatentNoise draw_noise(const ModelSpec& spec, std::size_t rows, Rng& rng);

enum class Side { kX, kY };
enum class VccaDirection { kX, kY, kBi };

/// Wyner joint objective with MI weight `lambda` and regularizer weight `beta`.
Loss wyner_joint_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
                      double lambda, double beta, const LatentNoise& noise);

/// Marginal-encoder objective for one side. Restricts `binder` so that only
/// q(z|side) and the side's local encoder are trainable.
Loss wyner_marginal_loss(ParamBinder& binder, const Model& model, const Tensor& x,
                         const Tensor& y, Side side, const LatentNoise& noise);

/// Named parts of a single-latent VAE inside a model.
struct VaeComponents {
  std::string encoder;
  std::string prior;
  std::string decoder;
};

/// Single-latent VAE on `data` with `eps` as the latent noise. Only the
/// encoder stays trainable; prior and decoder are frozen.
Loss vanilla_vae_loss(ParamBinder& binder, const Model& model, const VaeComponents& parts,
                      const Tensor& data, const Tensor& eps);

/// JVAE/JMVAE joint objective over the single latent w. The w-KL is reported
/// as `reg_z`.
Loss jvae_joint_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
                     const LatentNoise& noise);

/// alpha * batch mean of KL(q(w|x,y) || q(w|x)) + KL(q(w|x,y) || q(w|y)).
/// Closed-form, so it needs no noise.
Var jmvae_marginal_reg(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
                       double alpha);

/// JVAE joint objective plus the JMVAE regularizer as `extras`.
Loss jmvae_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
                double alpha, const LatentNoise& noise);

/// Conditional VAE for y given x; KL(q(v|y,x) || p(v|x)) is `reg_v`.
Loss cvae_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
               const LatentNoise& noise);

/// VCCA-private. `kBi` mixes each term as mu_mix * (x-direction) +
/// (1 - mu_mix) * (y-direction); the y-direction common sample uses `z_alt`.
Loss vcca_private_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
                       VccaDirection direction, double mu_mix, const LatentNoise& noise);

/// Variational information bottleneck for y given x; the KL term scaled by
/// `beta_ib` is `reg_z`.
Loss vib_loss(ParamBinder& binder, const Model& model, const Tensor& x, const Tensor& y,
              double beta_ib, const LatentNoise& noise);

}  // namespace wyner
