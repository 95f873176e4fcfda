// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit tests and the acceptance runner: small models,
// parameter perturbation, and a finite-difference check over model losses.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "wyner/estimators.hpp"
#include "wyner/losses.hpp"
#include "wyner/models.hpp"
#include "wyner/rng.hpp"
#include "wyner/tensor.hpp"

namespace wyner::testing {

/// A narrow model that keeps finite-difference checks cheap.
inline ModelSpec tiny_spec(ModelKind kind, std::size_t width = 6, std::size_t depth = 1) {
  ModelSpec s;
  s.kind = kind;
  s.x_dim = 3;
  s.y_dim = 3;
  s.z_dim = 2;
  s.u_dim = 2;
  s.v_dim = 2;
  s.hidden_width = width;
  s.hidden_depth = depth;
  return s;
}

/// One-dimensional x and y with one-dimensional latents: the "2-dim toy
/// model" used for estimator oracles.
inline ModelSpec toy_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.x_dim = 1;
  s.y_dim = 1;
  s.z_dim = 1;
  s.u_dim = 1;
  s.v_dim = 1;
  s.hidden_width = 4;
  s.hidden_depth = 1;
  return s;
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t = rng.normal_tensor(rows, cols);
  for (double& v : t.data()) v *= scale;
  return t;
}

/// Adds N(0, scale^2) to every parameter, biases and prior log-variances
/// included, so that no gradient is trivially zero.
inline void perturb(Model& model, std::uint64_t seed, double scale = 0.1) {
  Rng rng = Rng(seed).split("perturb");
  for (NamedParam& p : model.parameters()) {
    for (double& v : p.tensor->data()) v += scale * rng.normal();
  }
}

/// Every weight, bias and prior log-variance set to zero.
inline void zero_all(Model& model) {
  for (NamedParam& p : model.parameters()) {
    for (double& v : p.tensor->data()) v = 0.0;
  }
}

inline void fill(Tensor& t, double value) {
  for (double& v : t.data()) v = value;
}

using ModelLoss = std::function<Var(ParamBinder&, const Model&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t coordinates = 0;
  /// Largest |gradient| seen on a bound parameter the binder left frozen.
  double frozen_grad_max = 0.0;
};

/// Central differences against the tape gradient for every coordinate of
/// every parameter the binder leaves trainable. Error per coordinate is
/// |analytic - fd| / max(1, |fd|), the same measure as `grad_check`.
inline GradCheckResult model_grad_check(Model& model, const ModelLoss& loss, double h = 1e-5) {
  std::vector<std::pair<std::string, Tensor>> analytic;
  GradCheckResult out;
  {
    Tape tape;
    ParamBinder binder(tape);
    const Var total = loss(binder, model);
    tape.backward(total);
    for (const auto& [name, var] : binder.bound()) {
      Tensor g = tape.grad(var);
      if (binder.is_trainable(name)) {
        analytic.emplace_back(name, std::move(g));
      } else {
        for (double v : g.data()) out.frozen_grad_max = std::max(out.frozen_grad_max, std::abs(v));
      }
    }
  }
  auto value = [&] {
    Tape tape;
    ParamBinder binder(tape);
    return loss(binder, model).item();
  };
  std::vector<NamedParam> params = model.parameters();
  for (const auto& [name, grad] : analytic) {
    auto it = std::find_if(params.begin(), params.end(),
                           [&](const NamedParam& p) { return p.name == name; });
    Tensor& t = *it->tensor;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = value();
      t[i] = saved - h;
      const double down = value();
      t[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      out.max_rel_err = std::max(out.max_rel_err, std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)));
      ++out.coordinates;
    }
  }
  return out;
}

/// Sample mean and standard error of the mean.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

/// Rows [begin, end) of a matrix.
inline Tensor rows_of(const Tensor& m, std::size_t begin, std::size_t end) {
  Tensor out({end - begin, m.cols()});
  std::copy(m.raw() + begin * m.cols(), m.raw() + end * m.cols(), out.raw());
  return out;
}

/// `row` ([1, d]) stacked `n` times.
inline Tensor repeat_row(const Tensor& row, std::size_t n) {
  Tensor out({n, row.cols()});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(row.raw(), row.cols(), out.raw() + r * row.cols());
  return out;
}

// ---- loss fixtures -----------------------------------------------------------

/// A perturbed tiny model with a random batch and frozen noise.
struct LossFixture {
  Model model;
  Tensor x;
  Tensor y;
  LatentNoise noise;
};

inline LossFixture loss_fixture(ModelKind kind, std::size_t rows = 4, std::uint64_t seed = 1) {
  LossFixture f;
  f.model = init_model(tiny_spec(kind), seed);
  perturb(f.model, seed + 100);
  Rng rng = Rng(seed).split("data");
  f.x = random_matrix(rows, f.model.spec.x_dim, rng, 2.0);
  f.y = random_matrix(rows, f.model.spec.y_dim, rng, 2.0);
  f.noise = draw_noise(f.model.spec, rows, rng);
  return f;
}

/// One scalar objective per loss op, for finite-difference checks.
struct GradCase {
  std::string name;
  ModelKind kind;
  std::function<Var(ParamBinder&, const Model&, const LossFixture&)> fn;
};

inline std::vector<GradCase> grad_cases() {
  using F = const LossFixture&;
  std::vector<GradCase> cases{
      {"wyner_joint", ModelKind::kWyner,
       [](ParamBinder& b, const Model& m, F f) { return wyner_joint_loss(b, m, f.x, f.y, 0.05, 1.0, f.noise).total; }},
      {"wyner_marginal_x", ModelKind::kWyner,
       [](ParamBinder& b, const Model& m, F f) { return wyner_marginal_loss(b, m, f.x, f.y, Side::kX, f.noise).total; }},
      {"wyner_marginal_y", ModelKind::kWyner,
       [](ParamBinder& b, const Model& m, F f) { return wyner_marginal_loss(b, m, f.x, f.y, Side::kY, f.noise).total; }},
      {"vanilla_vae", ModelKind::kJvae,
       [](ParamBinder& b, const Model& m, F f) { return vanilla_vae_loss(b, m, {"enc_wx", "w", "dec_x"}, f.x, f.noise.z).total; }},
      {"jvae_joint", ModelKind::kJvae,
       [](ParamBinder& b, const Model& m, F f) { return jvae_joint_loss(b, m, f.x, f.y, f.noise).total; }},
      {"jmvae_reg", ModelKind::kJmvae,
       [](ParamBinder& b, const Model& m, F f) { return jmvae_marginal_reg(b, m, f.x, f.y, 1.3); }},
      {"jmvae", ModelKind::kJmvae,
       [](ParamBinder& b, const Model& m, F f) { return jmvae_loss(b, m, f.x, f.y, 0.7, f.noise).total; }},
      {"cvae", ModelKind::kCvae,
       [](ParamBinder& b, const Model& m, F f) { return cvae_loss(b, m, f.x, f.y, f.noise).total; }},
      {"vib", ModelKind::kVib,
       [](ParamBinder& b, const Model& m, F f) { return vib_loss(b, m, f.x, f.y, 0.1, f.noise).total; }},
  };
  for (auto [name, dir] : {std::pair{"vcca_private_bi", VccaDirection::kBi},
                           {"vcca_private_x", VccaDirection::kX},
                           {"vcca_private_y", VccaDirection::kY}}) {
    cases.push_back({name, ModelKind::kVccaPrivate, [dir](ParamBinder& b, const Model& m, F f) {
                       return vcca_private_loss(b, m, f.x, f.y, dir, 0.3, f.noise).total;
                     }});
  }
  return cases;
}

// ---- estimator oracles -----------------------------------------------------

/// Probability-space agreement between many single-sample IS estimates and a
/// large naive-MC reference on one pair.
struct UnbiasednessCheck {
  MeanSe is;         // mean of exp(IS estimate, S = 1)
  MeanSe reference;  // naive MC, chunk means
  double z_score() const {
    return std::abs(is.mean - reference.mean) / std::sqrt(is.se * is.se + reference.se * reference.se);
  }
};

/// `is_fn` and `mc_fn` receive (x rows, y rows, samples, noise). The MC
/// reference uses `chunks` x `chunk_samples` draws; the IS side uses `trials`
/// independent S = 1 estimates.
inline UnbiasednessCheck unbiasedness(
    const Model& model, const Tensor& x, const Tensor& y,
    const std::function<std::vector<double>(const Tensor&, const Tensor&, std::size_t, const LatentNoise&)>& is_fn,
    const std::function<std::vector<double>(const Tensor&, const Tensor&, std::size_t, const LatentNoise&)>& mc_fn,
    std::size_t trials, std::size_t chunks, std::size_t chunk_samples, std::uint64_t seed) {
  Rng rng = Rng(seed).split("unbiasedness");
  Rng is_rng = rng.split("is");
  const LatentNoise is_noise = draw_eval_noise(model.spec, trials, 1, is_rng);
  std::vector<double> is = is_fn(repeat_row(x, trials), repeat_row(y, trials), 1, is_noise);
  for (double& v : is) v = std::exp(v);

  Rng mc_rng = rng.split("mc");
  const LatentNoise mc_noise = draw_eval_noise(model.spec, chunks, chunk_samples, mc_rng);
  std::vector<double> ref = mc_fn(repeat_row(x, chunks), repeat_row(y, chunks), chunk_samples, mc_noise);
  for (double& v : ref) v = std::exp(v);
  return {mean_se(is), mean_se(ref)};
}

/// The closed-form common-information estimate computed directly from the
/// joint encoder weights with plain loops, sharing no code with the library:
/// half the summed clamped prior log-variances minus the mean half-sum of
/// clamped posterior log-variances.
inline double mi_reference(const Model& model, const Tensor& x, const Tensor& y) {
  const GaussianHeadNet& net = model.net("enc_joint");
  const Tensor& prior = model.prior(model.spec.kind == ModelKind::kWyner ? "z" : "w");
  auto clamp_lv = [](double v) { return std::min(10.0, std::max(-10.0, v)); };
  double prior_sum = 0.0;
  for (std::size_t j = 0; j < prior.size(); ++j) prior_sum += clamp_lv(prior[j]);
  double post = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> h;
    for (std::size_t j = 0; j < x.cols(); ++j) h.push_back(x.at(r, j));
    for (std::size_t j = 0; j < y.cols(); ++j) h.push_back(y.at(r, j));
    for (const Linear& l : net.hidden) {
      std::vector<double> next(l.weight.cols(), 0.0);
      for (std::size_t o = 0; o < next.size(); ++o) {
        double a = l.bias[o];
        for (std::size_t i = 0; i < h.size(); ++i) a += h[i] * l.weight.at(i, o);
        next[o] = net.activation == Activation::kRelu ? std::max(0.0, a) : (a > 0 ? a : 0.2 * a);
      }
      h = std::move(next);
    }
    const Linear& head = *net.log_var_head;
    for (std::size_t o = 0; o < head.weight.cols(); ++o) {
      double a = head.bias[o];
      for (std::size_t i = 0; i < h.size(); ++i) a += h[i] * head.weight.at(i, o);
      post += clamp_lv(a);
    }
  }
  return 0.5 * prior_sum - post / (2.0 * static_cast<double>(x.rows()));
}

}  // namespace wyner::testing
