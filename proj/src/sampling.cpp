// SPDX-License-Identifier: Apache-2.0
#include "wyner/sampling.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace wyner {

namespace {

void require_wyner(const Model& m) {
  if (m.spec.kind != ModelKind::kWyner) {
    throw NotApplicable("sampling modes are defined for the Wyner model only");
  }
}

void require_noise(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw DimensionMismatch(std::string("noise block ") + what + " must be [" +
                            std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
}

void require_row(const Tensor& t, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.rows() != 1 || t.cols() != cols) {
    throw DimensionMismatch(std::string(what) + " must be a [1, " + std::to_string(cols) + "] row");
  }
}

Tensor repeat_row(const Tensor& row, std::size_t n) {
  Tensor out({n, row.cols()});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(row.raw(), row.cols(), out.raw() + r * row.cols());
  return out;
}

Tensor draw(const GaussianBatch& g, const Tensor& eps) {
  Tensor out({g.mean.rows(), g.mean.cols()});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = g.mean[i] + std::exp(0.5 * g.log_var[i]) * eps[i];
  }
  return out;
}

Tensor from_prior(const Model& m, const std::string& name, const Tensor& eps) {
  const Tensor& lv = m.prior(name);
  Tensor out({eps.rows(), eps.cols()});
  for (std::size_t r = 0; r < eps.rows(); ++r) {
    for (std::size_t j = 0; j < eps.cols(); ++j) {
      out.at(r, j) = std::exp(0.5 * std::clamp(lv[j], kLogVarMin, kLogVarMax)) * eps.at(r, j);
    }
  }
  return out;
}

void require_ready(const Model& m, Side side) {
  if (!(side == Side::kX ? m.marginal_x_ready : m.marginal_y_ready)) {
    throw MarginalEncoderMissing(std::string("marginal encoder for ") +
                                 (side == Side::kX ? "x" : "y") + " has not been trained");
  }
}

}  // namespace

SamplePairs sample_joint(const Model& m, std::size_t n, const LatentNoise& noise) {
  require_wyner(m);
  const ModelSpec& s = m.spec;
  require_noise(noise.z, n, s.z_dim, "z");
  require_noise(noise.u, n, s.u_dim, "u");
  require_noise(noise.v, n, s.v_dim, "v");
  const Tensor z = from_prior(m, "z", noise.z);
  const Tensor u = from_prior(m, "u", noise.u);
  const Tensor v = from_prior(m, "v", noise.v);
  return SamplePairs{decode_mean(m.net("dec_x"), z, u).mean, decode_mean(m.net("dec_y"), z, v).mean};
}

Tensor sample_conditional(const Model& m, const Tensor& input, Direction d, std::size_t n,
                          const LatentNoise& noise) {
  require_wyner(m);
  const ModelSpec& s = m.spec;
  const bool fwd = d == Direction::kXToY;
  require_ready(m, fwd ? Side::kX : Side::kY);
  require_row(input, fwd ? s.x_dim : s.y_dim, "conditioning input");
  require_noise(noise.z, n, s.z_dim, "z");
  const Tensor& local_eps = fwd ? noise.v : noise.u;
  require_noise(local_eps, n, fwd ? s.v_dim : s.u_dim, fwd ? "v" : "u");
  const GaussianBatch qz = infer(m.net(fwd ? "enc_zx" : "enc_zy"), repeat_row(input, n));
  const Tensor z = draw(qz, noise.z);
  const Tensor local = from_prior(m, fwd ? "v" : "u", local_eps);
  return decode_mean(m.net(fwd ? "dec_y" : "dec_x"), z, local).mean;
}

StyleCode extract_style(const Model& m, const Reference& ref, Side side,
                        const LatentNoise& noise) {
  require_wyner(m);
  const ModelSpec& s = m.spec;
  const bool is_x = side == Side::kX;
  const std::optional<Tensor>& own = is_x ? ref.x : ref.y;
  if (!own) throw SideMismatch("style extraction needs a reference on the style's own side");
  require_row(*own, is_x ? s.x_dim : s.y_dim, "style reference");
  require_noise(noise.z, 1, s.z_dim, "z");
  const Tensor& local_eps = is_x ? noise.u : noise.v;
  require_noise(local_eps, 1, is_x ? s.u_dim : s.v_dim, is_x ? "u" : "v");

  StyleCode style;
  style.side = side;
  GaussianBatch qz;
  if (ref.x && ref.y) {
    require_row(*ref.x, s.x_dim, "reference x");
    require_row(*ref.y, s.y_dim, "reference y");
    qz = infer(m.net("enc_joint"), concat_cols({&*ref.x, &*ref.y}));
    style.source = "pair";
  } else {
    require_ready(m, side);
    qz = infer(m.net(is_x ? "enc_zx" : "enc_zy"), *own);
    style.source = is_x ? "x" : "y";
  }
  const Tensor z = draw(qz, noise.z);
  const GaussianBatch ql = infer(m.net(is_x ? "enc_u" : "enc_v"), concat_cols({&z, &*own}));
  style.local = draw(ql, local_eps);
  style.z0 = z;
  return style;
}

Tensor sample_conditional_styled(const Model& m, const Tensor& input, Direction d,
                                 const StyleCode& style, const LatentNoise& noise) {
  require_wyner(m);
  const ModelSpec& s = m.spec;
  const bool fwd = d == Direction::kXToY;
  if (style.side != (fwd ? Side::kY : Side::kX)) {
    throw SideMismatch("style side must match the output side");
  }
  require_ready(m, fwd ? Side::kX : Side::kY);
  require_row(input, fwd ? s.x_dim : s.y_dim, "conditioning input");
  require_row(style.local, fwd ? s.v_dim : s.u_dim, "style code");
  require_noise(noise.z, 1, s.z_dim, "z");
  const Tensor z = draw(infer(m.net(fwd ? "enc_zx" : "enc_zy"), input), noise.z);
  return decode_mean(m.net(fwd ? "dec_y" : "dec_x"), z, style.local).mean;
}

SamplePairs sample_joint_styled(const Model& m, const StyleCode& style_x, const StyleCode& style_y,
                                std::size_t n, const LatentNoise& noise) {
  require_wyner(m);
  const ModelSpec& s = m.spec;
  if (style_x.side != Side::kX || style_y.side != Side::kY) {
    throw SideMismatch("joint styled sampling needs an x-side and a y-side style");
  }
  require_row(style_x.local, s.u_dim, "x style code");
  require_row(style_y.local, s.v_dim, "y style code");
  require_noise(noise.z, n, s.z_dim, "z");
  const Tensor z = from_prior(m, "z", noise.z);
  const Tensor u = repeat_row(style_x.local, n);
  const Tensor v = repeat_row(style_y.local, n);
  return SamplePairs{decode_mean(m.net("dec_x"), z, u).mean, decode_mean(m.net("dec_y"), z, v).mean};
}

SamplePairs joint_stochastic_reconstruction(const Model& m, const Reference& ref, std::size_t n,
                                            ReconInference inference,
                                            const LatentNoise& noise) {
  require_wyner(m);
  const ModelSpec& s = m.spec;
  require_noise(noise.z, n, s.z_dim, "z");
  require_noise(noise.u, n, s.u_dim, "u");
  require_noise(noise.v, n, s.v_dim, "v");
  GaussianBatch qz;
  switch (inference) {
    case ReconInference::kPair:
      if (!ref.x || !ref.y) throw SideMismatch("pair reconstruction needs both sides");
      require_row(*ref.x, s.x_dim, "reference x");
      require_row(*ref.y, s.y_dim, "reference y");
      qz = infer(m.net("enc_joint"), concat_cols({&*ref.x, &*ref.y}));
      break;
    case ReconInference::kX:
      if (!ref.x) throw SideMismatch("x reconstruction needs an x reference");
      require_ready(m, Side::kX);
      require_row(*ref.x, s.x_dim, "reference x");
      qz = infer(m.net("enc_zx"), *ref.x);
      break;
    case ReconInference::kY:
      if (!ref.y) throw SideMismatch("y reconstruction needs a y reference");
      require_ready(m, Side::kY);
      require_row(*ref.y, s.y_dim, "reference y");
      qz = infer(m.net("enc_zy"), *ref.y);
      break;
  }
  const GaussianBatch rep{repeat_row(qz.mean, n), repeat_row(qz.log_var, n)};
  const Tensor z = draw(rep, noise.z);
  const Tensor u = from_prior(m, "u", noise.u);
  const Tensor v = from_prior(m, "v", noise.v);
  return SamplePairs{decode_mean(m.net("dec_x"), z, u).mean, decode_mean(m.net("dec_y"), z, v).mean};
}

void write_samples_header(std::ostream& out, std::size_t x_dim, std::size_t y_dim) {
  out << "task,label_ref";
  for (std::size_t j = 1; j <= x_dim; ++j) out << ",x" << j;
  for (std::size_t j = 1; j <= y_dim; ++j) out << ",y" << j;
  out << '\n';
}

void write_samples(std::ostream& out, std::string_view task, int label_ref, const Tensor* x,
                   const Tensor* y, std::size_t x_dim, std::size_t y_dim) {
  const std::size_t rows = x ? x->rows() : (y ? y->rows() : 0);
  if (x && y && x->rows() != y->rows()) throw ShapeMismatch("sample sides differ in row count");
  out << std::setprecision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    out << task << ',';
    if (label_ref > 0) out << label_ref;
    for (std::size_t j = 0; j < x_dim; ++j) {
      out << ',';
      if (x) out << x->at(r, j);
    }
    for (std::size_t j = 0; j < y_dim; ++j) {
      out << ',';
      if (y) out << y->at(r, j);
    }
    out << '\n';
  }
}

}  // namespace wyner
