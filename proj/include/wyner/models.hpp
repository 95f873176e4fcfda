// SPDX-License-Identifier: Apache-2.0
//
// Parameter bundles for the Wyner model and the baselines at MoG scale.
//
// Every model is a set of named fully-connected Gaussian-head networks plus
// zero-mean diagonal priors with trainable log-variances. Conditioning is by
// feature concatenation in the order the component is written, e.g. the
// encoder q(u|z,x) consumes z (+) x.
//
// Component names by kind:
//   wyner  enc_joint(x,y->z) enc_u(z,x->u) enc_v(z,y->v) enc_zx(x->z)
//          enc_zy(y->z) dec_x(z,u->x) dec_y(z,v->y)      priors z u v
//   jvae / jmvae
//          enc_joint(x,y->w) enc_wx(x->w) enc_wy(y->w) dec_x(w->x)
//          dec_y(w->y)                                   prior w, |w|=|z|+|u|+|v|
//   cvae   enc_v(y,x->v) prior_v(x->v) dec_y(v,x->y)
//   vcca   enc_zx(x->z) enc_zy(y->z) enc_u(x->u) enc_v(y->v)
//          dec_x(z,u->x) dec_y(z,v->y)                   priors z u v
//   vib    enc_zx(x->z) dec_y(z->y)                      prior z
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wyner/gaussian.hpp"
#include "wyner/tensor.hpp"

namespace wyner {

enum class ModelKind { kWyner, kJvae, kJmvae, kCvae, kVccaPrivate, kVib };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

enum class Activation { kRelu, kLeakyRelu };

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct GaussianHeadNet {
  std::vector<Linear> hidden;
  Linear mean_head;
  /// Absent for decoders, whose variance is the constant exp(fixed_log_var).
  std::optional<Linear> log_var_head;
  double fixed_log_var = 0.0;
  Activation activation = Activation::kRelu;

  std::size_t in_dim() const;
  std::size_t out_dim() const { return mean_head.bias.size(); }
};

/// Decoder variance 1/2 at MoG scale.
inline const double kDecoderLogVar = -0.69314718055994530942;

struct ModelSpec {
  ModelKind kind = ModelKind::kWyner;
  std::size_t x_dim = 10;
  std::size_t y_dim = 10;
  std::size_t z_dim = 10;
  std::size_t u_dim = 10;
  std::size_t v_dim = 10;
  std::size_t hidden_width = 256;
  std::size_t hidden_depth = 3;
  Activation activation = Activation::kRelu;
  double decoder_log_var = kDecoderLogVar;

  std::size_t w_dim() const { return z_dim + u_dim + v_dim; }
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct NamedConstParam {
  std::string name;
  const Tensor* tensor;
};

struct Model {
  ModelSpec spec;
  std::map<std::string, GaussianHeadNet> nets;
  std::map<std::string, Tensor> prior_log_var;
  /// Whether q(.|x) / q(.|y) is usable for conditional tasks. Set at init for
  /// kinds that train their conditional path jointly, and by the marginal
  /// stage for the two-stage kinds.
  bool marginal_x_ready = false;
  bool marginal_y_ready = false;

  const GaussianHeadNet& net(std::string_view name) const;
  bool has_net(std::string_view name) const { return nets.count(std::string(name)) != 0; }
  const Tensor& prior(std::string_view name) const;

  /// Every trainable tensor, sorted by name ("<net>.h0.w", "prior.z", ...).
  std::vector<NamedParam> parameters();
  std::vector<NamedConstParam> parameters() const;
  std::size_t parameter_count() const;
};

/// Glorot-style uniform(+-sqrt(6/fan_in)) weights, zero biases, zero prior
/// log-variances. Each tensor draws from its own named stream of `seed`.
Model init_model(const ModelSpec& spec, std::uint64_t seed);

// ---- differentiable forward ---------------------------------------------

/// Binds model parameters onto a tape by name, once per tensor.
class ParamBinder {
 public:
  using Predicate = std::function<bool(std::string_view)>;

  explicit ParamBinder(Tape& tape, Predicate trainable = {});

  Var bind(const std::string& name, const Tensor& tensor);
  /// Narrows the trainable set to names also accepted by `allowed`. Throws
  /// FrozenParamTouched if an already-bound trainable tensor falls outside it.
  void restrict(Predicate allowed);
  bool is_trainable(std::string_view name) const;
  Tape& tape() { return tape_; }
  const std::vector<std::pair<std::string, Var>>& bound() const { return bound_; }

 private:
  Tape& tape_;
  Predicate trainable_;
  std::vector<Predicate> restrictions_;
  std::map<std::string, Var> cache_;
  std::vector<std::pair<std::string, Var>> bound_;
};

/// Gaussian produced by a named network on `input` ([rows, in_dim]); the
/// log-variance head output is clamped to [-10, 10].
GaussianVar infer(ParamBinder& binder, const Model& model, const std::string& net, Var input);
/// Zero-mean prior as a shared [d] row.
GaussianVar prior(ParamBinder& binder, const Model& model, const std::string& name, std::size_t rows);
/// Clamped prior log-variance row.
Var prior_log_var(ParamBinder& binder, const Model& model, const std::string& name);

// ---- plain evaluation ----------------------------------------------------

/// Batched Gaussian as [rows, d] mean and log-variance matrices.
struct GaussianBatch {
  Tensor mean;
  Tensor log_var;
};

GaussianBatch infer(const GaussianHeadNet& net, const Tensor& input);
/// Decoder with its mean network; log-variance is the net's fixed constant.
GaussianBatch decode_mean(const GaussianHeadNet& dec, const Tensor& common, const Tensor& local);

/// Feature-axis concatenation of equal-row matrices.
Tensor concat_cols(std::initializer_list<const Tensor*> parts);

}  // namespace wyner
