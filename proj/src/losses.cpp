// SPDX-License-Identifier: Apache-2.0
#include "wyner/losses.hpp"

#include <optional>
#include <string>

namespace wyner {

namespace {

struct Terms {
  std::optional<Var> rec_x, rec_y, reg_z, reg_u, reg_v, mi_term, extras;
};

Loss finish(Tape& tape, const Terms& t) {
  Loss out;
  std::optional<Var> total;
  auto take = [&](const std::optional<Var>& term, double& slot) {
    if (!term) return;
    slot = term->item();
    total = total ? add(*total, *term) : *term;
  };
  take(t.rec_x, out.parts.rec_x);
  take(t.rec_y, out.parts.rec_y);
  take(t.reg_z, out.parts.reg_z);
  take(t.reg_u, out.parts.reg_u);
  take(t.reg_v, out.parts.reg_v);
  take(t.mi_term, out.parts.mi_term);
  take(t.extras, out.parts.extras);
  out.total = total ? *total : tape.constant(Tensor::scalar(0.0));
  out.parts.total = out.total.item();
  return out;
}

void require_rows(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw DimensionMismatch(std::string(what) + ": expected [" + std::to_string(rows) + ", " +
                            std::to_string(cols) + "]");
  }
}

void require_batch(const Model& m, const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || x.rows() == 0) throw DimensionMismatch("batch x must be a non-empty matrix");
  require_rows(x, x.rows(), m.spec.x_dim, "batch x");
  require_rows(y, x.rows(), m.spec.y_dim, "batch y");
}

Var nll(const GaussianVar& dec, Var target) { return neg(mean(log_prob(dec, target))); }

/// Sampled latent plus its closed-form KL to the named zero-mean prior.
struct Latent {
  GaussianVar q;
  Var sample;
  Var kl;  // batch mean
};

Latent encode(ParamBinder& b, const Model& m, const std::string& net, Var input,
              const std::string& prior_name, const Tensor& eps, std::size_t dim) {
  require_rows(eps, input.value().rows(), dim, ("noise for " + net).c_str());
  Latent l;
  l.q = infer(b, m, net, input);
  l.sample = rsample(l.q, b.tape().constant(eps));
  l.kl = mean(kl_to_zero_mean(l.q, prior_log_var(b, m, prior_name)));
  return l;
}

bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

struct VccaTerms {
  Var rec_x, rec_y, reg_z, reg_u, reg_v;
};

VccaTerms vcca_direction(ParamBinder& b, const Model& m, Var x, Var y, Side side,
                         const LatentNoise& noise) {
  const ModelSpec& s = m.spec;
  const bool from_x = side == Side::kX;
  Latent z = encode(b, m, from_x ? "enc_zx" : "enc_zy", from_x ? x : y, "z",
                    from_x ? noise.z : noise.z_alt, s.z_dim);
  Latent u = encode(b, m, "enc_u", x, "u", noise.u, s.u_dim);
  Latent v = encode(b, m, "enc_v", y, "v", noise.v, s.v_dim);
  return VccaTerms{nll(infer(b, m, "dec_x", concat({z.sample, u.sample})), x),
                   nll(infer(b, m, "dec_y", concat({z.sample, v.sample})), y), z.kl, u.kl, v.kl};
}

}  // namespace

LatentNoise draw_noise(const ModelSpec& spec, std::size_t rows, Rng& rng) {
  LatentNoise n;
  switch (spec.kind) {
    case ModelKind::kWyner:
      n.z = rng.normal_tensor(rows, spec.z_dim);
      n.u = rng.normal_tensor(rows, spec.u_dim);
      n.v = rng.normal_tensor(rows, spec.v_dim);
      break;
    case ModelKind::kJvae:
    case ModelKind::kJmvae:
      n.z = rng.normal_tensor(rows, spec.w_dim());
      break;
    case ModelKind::kCvae:
      n.z = rng.normal_tensor(rows, spec.v_dim);
      break;
    case ModelKind::kVccaPrivate:
      n.z = rng.normal_tensor(rows, spec.z_dim);
      n.u = rng.normal_tensor(rows, spec.u_dim);
      n.v = rng.normal_tensor(rows, spec.v_dim);
      n.z_alt = rng.normal_tensor(rows, spec.z_dim);
      break;
    case ModelKind::kVib:
      n.z = rng.normal_tensor(rows, spec.z_dim);
      break;
  }
  return n;
}

Loss wyner_joint_loss(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
                      double lambda, double beta, const LatentNoise& noise) {
  if (lambda < 0.0) throw InvalidSpec("lambda must be non-negative");
  if (beta < 1.0) throw InvalidSpec("beta must be at least 1");
  require_batch(m, x_in, y_in);
  const ModelSpec& s = m.spec;
  Tape& tape = b.tape();
  Var x = tape.constant(x_in);
  Var y = tape.constant(y_in);

  Latent z = encode(b, m, "enc_joint", concat({x, y}), "z", noise.z, s.z_dim);
  Latent u = encode(b, m, "enc_u", concat({z.sample, x}), "u", noise.u, s.u_dim);
  Latent v = encode(b, m, "enc_v", concat({z.sample, y}), "v", noise.v, s.v_dim);

  Terms t;
  t.rec_x = nll(infer(b, m, "dec_x", concat({z.sample, u.sample})), x);
  t.rec_y = nll(infer(b, m, "dec_y", concat({z.sample, v.sample})), y);
  t.reg_z = scale(z.kl, beta);
  t.reg_u = scale(u.kl, beta);
  t.reg_v = scale(v.kl, beta);
  t.mi_term = scale(z.kl, lambda);
  return finish(tape, t);
}

Loss wyner_marginal_loss(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
                         Side side, const LatentNoise& noise) {
  const bool is_x = side == Side::kX;
  const std::string enc = is_x ? "enc_zx." : "enc_zy.";
  const std::string local = is_x ? "enc_u." : "enc_v.";
  b.restrict([enc, local](std::string_view name) {
    return has_prefix(name, enc) || has_prefix(name, local);
  });
  const ModelSpec& s = m.spec;
  Tape& tape = b.tape();
  const Tensor& data = is_x ? x_in : y_in;
  const std::size_t dim = is_x ? s.x_dim : s.y_dim;
  if (data.rank() != 2 || data.rows() == 0) throw DimensionMismatch("batch must be non-empty");
  require_rows(data, data.rows(), dim, "marginal batch");
  Var d = tape.constant(data);

  Latent z = encode(b, m, is_x ? "enc_zx" : "enc_zy", d, "z", noise.z, s.z_dim);
  Latent l = is_x ? encode(b, m, "enc_u", concat({z.sample, d}), "u", noise.u, s.u_dim)
                  : encode(b, m, "enc_v", concat({z.sample, d}), "v", noise.v, s.v_dim);
  Var rec = nll(infer(b, m, is_x ? "dec_x" : "dec_y", concat({z.sample, l.sample})), d);

  Terms t;
  (is_x ? t.rec_x : t.rec_y) = rec;
  t.reg_z = z.kl;
  (is_x ? t.reg_u : t.reg_v) = l.kl;
  return finish(tape, t);
}

Loss vanilla_vae_loss(ParamBinder& b, const Model& m, const VaeComponents& parts,
                      const Tensor& data, const Tensor& eps) {
  const std::string enc = parts.encoder + ".";
  b.restrict([enc](std::string_view name) { return has_prefix(name, enc); });
  const GaussianHeadNet& encoder = m.net(parts.encoder);
  if (data.rank() != 2 || data.rows() == 0) throw DimensionMismatch("batch must be non-empty");
  require_rows(data, data.rows(), encoder.in_dim(), "vae batch");
  Tape& tape = b.tape();
  Var d = tape.constant(data);
  Latent w = encode(b, m, parts.encoder, d, parts.prior, eps, encoder.out_dim());
  Terms t;
  t.rec_x = nll(infer(b, m, parts.decoder, w.sample), d);
  t.reg_z = w.kl;
  return finish(tape, t);
}

Loss jvae_joint_loss(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
                     const LatentNoise& noise) {
  require_batch(m, x_in, y_in);
  Tape& tape = b.tape();
  Var x = tape.constant(x_in);
  Var y = tape.constant(y_in);
  Latent w = encode(b, m, "enc_joint", concat({x, y}), "w", noise.z, m.spec.w_dim());
  Terms t;
  t.rec_x = nll(infer(b, m, "dec_x", w.sample), x);
  t.rec_y = nll(infer(b, m, "dec_y", w.sample), y);
  t.reg_z = w.kl;
  return finish(tape, t);
}

Var jmvae_marginal_reg(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
                       double alpha) {
  if (alpha < 0.0) throw InvalidSpec("alpha must be non-negative");
  require_batch(m, x_in, y_in);
  Tape& tape = b.tape();
  Var x = tape.constant(x_in);
  Var y = tape.constant(y_in);
  GaussianVar joint = infer(b, m, "enc_joint", concat({x, y}));
  GaussianVar qx = infer(b, m, "enc_wx", x);
  GaussianVar qy = infer(b, m, "enc_wy", y);
  Var per_row = add(kl(joint, qx), kl(joint, qy));
  return scale(mean(per_row), alpha);
}

Loss jmvae_loss(ParamBinder& b, const Model& m, const Tensor& x, const Tensor& y, double alpha,
                const LatentNoise& noise) {
  Loss base = jvae_joint_loss(b, m, x, y, noise);
  Var reg = jmvae_marginal_reg(b, m, x, y, alpha);
  Loss out;
  out.total = add(base.total, reg);
  out.parts = base.parts;
  out.parts.extras = reg.item();
  out.parts.total = out.total.item();
  return out;
}

Loss cvae_loss(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
               const LatentNoise& noise) {
  require_batch(m, x_in, y_in);
  require_rows(noise.z, x_in.rows(), m.spec.v_dim, "noise for enc_v");
  Tape& tape = b.tape();
  Var x = tape.constant(x_in);
  Var y = tape.constant(y_in);
  GaussianVar q = infer(b, m, "enc_v", concat({y, x}));
  GaussianVar p = infer(b, m, "prior_v", x);
  Var v = rsample(q, tape.constant(noise.z));
  Terms t;
  t.rec_y = nll(infer(b, m, "dec_y", concat({v, x})), y);
  t.reg_v = mean(kl(q, p));
  return finish(tape, t);
}

Loss vcca_private_loss(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
                       VccaDirection direction, double mu_mix, const LatentNoise& noise) {
  if (!(mu_mix >= 0.0 && mu_mix <= 1.0)) throw InvalidSpec("mu_mix must lie in [0, 1]");
  require_batch(m, x_in, y_in);
  Tape& tape = b.tape();
  Var x = tape.constant(x_in);
  Var y = tape.constant(y_in);
  Terms t;
  auto assign = [&t](const VccaTerms& v) {
    t.rec_x = v.rec_x;
    t.rec_y = v.rec_y;
    t.reg_z = v.reg_z;
    t.reg_u = v.reg_u;
    t.reg_v = v.reg_v;
  };
  if (direction == VccaDirection::kX) {
    assign(vcca_direction(b, m, x, y, Side::kX, noise));
  } else if (direction == VccaDirection::kY) {
    assign(vcca_direction(b, m, x, y, Side::kY, noise));
  } else {
    const VccaTerms a = vcca_direction(b, m, x, y, Side::kX, noise);
    const VccaTerms c = vcca_direction(b, m, x, y, Side::kY, noise);
    auto mix = [mu_mix](Var p, Var q) { return add(scale(p, mu_mix), scale(q, 1.0 - mu_mix)); };
    assign(VccaTerms{mix(a.rec_x, c.rec_x), mix(a.rec_y, c.rec_y), mix(a.reg_z, c.reg_z),
                     mix(a.reg_u, c.reg_u), mix(a.reg_v, c.reg_v)});
  }
  return finish(tape, t);
}

Loss vib_loss(ParamBinder& b, const Model& m, const Tensor& x_in, const Tensor& y_in,
              double beta_ib, const LatentNoise& noise) {
  if (!(beta_ib > 0.0)) throw InvalidSpec("beta_ib must be positive");
  require_batch(m, x_in, y_in);
  Tape& tape = b.tape();
  Var x = tape.constant(x_in);
  Var y = tape.constant(y_in);
  Latent z = encode(b, m, "enc_zx", x, "z", noise.z, m.spec.z_dim);
  Terms t;
  t.rec_y = nll(infer(b, m, "dec_y", z.sample), y);
  t.reg_z = scale(z.kl, beta_ib);
  return finish(tape, t);
}

}  // namespace wyner
