// SPDX-License-Identifier: Apache-2.0
#include "wyner/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wyner {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
// Pair-samples per chunk for the self-noised overloads.
constexpr std::size_t kChunkDraws = 4096;

Tensor repeat_rows(const Tensor& t, std::size_t times) {
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  Tensor out({rows * times, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < times; ++s) {
      std::copy_n(t.raw() + r * cols, cols, out.raw() + (r * times + s) * cols);
    }
  }
  return out;
}

/// Network outputs on `unique` rows, each repeated `times` times.
GaussianBatch infer_rep(const GaussianHeadNet& net, const Tensor& unique, std::size_t times) {
  GaussianBatch g = infer(net, unique);
  return GaussianBatch{repeat_rows(g.mean, times), repeat_rows(g.log_var, times)};
}

/// Zero-mean Gaussian with the (clamped) prior log-variance on every row.
GaussianBatch prior_batch(const Model& m, const std::string& name, std::size_t rows) {
  const Tensor& lv = m.prior(name);
  GaussianBatch g{Tensor({rows, lv.size()}), Tensor({rows, lv.size()})};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < lv.size(); ++j) {
      g.log_var.at(r, j) = std::clamp(lv[j], kLogVarMin, kLogVarMax);
    }
  }
  return g;
}

Tensor draw(const GaussianBatch& g, const Tensor& eps, const char* what) {
  if (eps.rank() != 2 || !eps.same_shape(g.mean)) {
    throw DimensionMismatch(std::string("noise block for ") + what + " has the wrong shape");
  }
  Tensor out({g.mean.rows(), g.mean.cols()});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = g.mean[i] + std::exp(0.5 * g.log_var[i]) * eps[i];
  }
  return out;
}

/// Adds `sign` * log N(x; g) to each row's accumulator.
void accumulate(std::vector<double>& acc, const GaussianBatch& g, const Tensor& x, double sign) {
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < acc.size(); ++r) {
    double lp = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t i = r * cols + j;
      const double d = x[i] - g.mean[i];
      lp += -kHalfLog2Pi - 0.5 * g.log_var[i] - 0.5 * d * d * std::exp(-g.log_var[i]);
    }
    acc[r] += sign * lp;
  }
}

/// log((1/S) sum_s exp(w_{r,s})) per pair.
std::vector<double> log_mean_exp(const std::vector<double>& logw, std::size_t samples) {
  const std::size_t pairs = logw.size() / samples;
  std::vector<double> out(pairs);
  for (std::size_t r = 0; r < pairs; ++r) {
    const double* w = logw.data() + r * samples;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) {
      if (!std::isfinite(w[s])) {
        throw NonFiniteWeight("non-finite log-weight for pair " + std::to_string(r));
      }
      hi = std::max(hi, w[s]);
    }
    double total = 0.0;
    for (std::size_t s = 0; s < samples; ++s) total += std::exp(w[s] - hi);
    out[r] = hi + std::log(total) - std::log(static_cast<double>(samples));
  }
  return out;
}

void require_pairs(const Model& m, const Tensor& x, const Tensor& y, std::size_t samples) {
  if (samples == 0) throw InvalidSpec("the number of samples must be at least 1");
  if (x.rank() != 2 || x.rows() == 0) throw EmptyTestSet("no pairs to evaluate");
  if (x.cols() != m.spec.x_dim || y.rank() != 2 || y.rows() != x.rows() ||
      y.cols() != m.spec.y_dim) {
    throw DimensionMismatch("evaluation pairs do not match the model dimensions");
  }
}

void require_marginal(const Model& m, Direction d) {
  const bool ready = d == Direction::kXToY ? m.marginal_x_ready : m.marginal_y_ready;
  if (!ready) {
    throw MarginalEncoderMissing(std::string("marginal encoder for ") +
                                 (d == Direction::kXToY ? "x" : "y") + " has not been trained");
  }
}

void require_conditional(const Model& m, Direction d) {
  if (!has_conditional(m.spec.kind, d)) {
    throw NotApplicable(std::string(to_string(m.spec.kind)) +
                        " has no conditional in this direction");
  }
  require_marginal(m, d);
}

/// Names of the pieces used on one conditional direction of a two-sided model.
struct SideNames {
  const char* enc_common;  // q(z|in)
  const char* enc_local;   // local encoder of the output side
  const char* prior_local;
  const char* dec;
};

SideNames side_names(Direction d) {
  return d == Direction::kXToY ? SideNames{"enc_zx", "enc_v", "v", "dec_y"}
                               : SideNames{"enc_zy", "enc_u", "u", "dec_x"};
}

const Tensor& local_noise(const LatentNoise& n, Direction d) {
  return d == Direction::kXToY ? n.v : n.u;
}

template <typename Fn>
std::vector<double> chunked(const Model& m, const Tensor& x, const Tensor& y, std::size_t samples,
                            Rng& rng, Fn fn) {
  require_pairs(m, x, y, samples);
  const std::size_t rows = x.rows();
  const std::size_t step = std::max<std::size_t>(1, kChunkDraws / samples);
  std::vector<double> out;
  out.reserve(rows);
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < rows; begin += step) {
    const std::size_t end = std::min(rows, begin + step);
    idx.resize(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    Tensor xs({idx.size(), x.cols()});
    Tensor ys({idx.size(), y.cols()});
    std::copy_n(x.raw() + begin * x.cols(), idx.size() * x.cols(), xs.raw());
    std::copy_n(y.raw() + begin * y.cols(), idx.size() * y.cols(), ys.raw());
    LatentNoise noise = draw_eval_noise(m.spec, idx.size(), samples, rng);
    const std::vector<double> part = fn(xs, ys, noise);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace

bool has_joint_likelihood(ModelKind kind) {
  return kind != ModelKind::kCvae && kind != ModelKind::kVib;
}

bool has_conditional(ModelKind kind, Direction direction) {
  if (kind == ModelKind::kCvae || kind == ModelKind::kVib) return direction == Direction::kXToY;
  return true;
}

bool has_mi(ModelKind kind) {
  return kind == ModelKind::kWyner || kind == ModelKind::kJvae || kind == ModelKind::kJmvae;
}

double mi_estimate(const Model& m, const Tensor& x, const Tensor& y) {
  if (!has_mi(m.spec.kind)) {
    throw NotApplicable(std::string(to_string(m.spec.kind)) + " has no joint encoder");
  }
  if (x.rank() != 2 || x.rows() == 0) throw EmptyTestSet("no pairs to evaluate");
  const std::string prior_name = m.spec.kind == ModelKind::kWyner ? "z" : "w";
  double prior_sum = 0.0;
  for (double lv : m.prior(prior_name).data()) {
    prior_sum += std::clamp(lv, kLogVarMin, kLogVarMax);
  }
  const GaussianBatch q = infer(m.net("enc_joint"), concat_cols({&x, &y}));
  double post_sum = 0.0;
  for (double lv : q.log_var.data()) post_sum += lv;
  return 0.5 * prior_sum - post_sum / (2.0 * static_cast<double>(x.rows()));
}

LatentNoise draw_eval_noise(const ModelSpec& spec, std::size_t rows, std::size_t samples,
                            Rng& rng) {
  return draw_noise(spec, rows * samples, rng);
}

std::vector<double> joint_ll_is(const Model& m, const Tensor& x, const Tensor& y,
                                std::size_t samples, const LatentNoise& noise) {
  require_pairs(m, x, y, samples);
  const std::size_t n = x.rows() * samples;
  const Tensor xr = repeat_rows(x, samples);
  const Tensor yr = repeat_rows(y, samples);
  std::vector<double> logw(n, 0.0);
  switch (m.spec.kind) {
    case ModelKind::kWyner: {
      const GaussianBatch qz = infer_rep(m.net("enc_joint"), concat_cols({&x, &y}), samples);
      const Tensor z = draw(qz, noise.z, "z");
      const GaussianBatch qu = infer(m.net("enc_u"), concat_cols({&z, &xr}));
      const Tensor u = draw(qu, noise.u, "u");
      const GaussianBatch qv = infer(m.net("enc_v"), concat_cols({&z, &yr}));
      const Tensor v = draw(qv, noise.v, "v");
      accumulate(logw, prior_batch(m, "z", n), z, 1.0);
      accumulate(logw, prior_batch(m, "u", n), u, 1.0);
      accumulate(logw, prior_batch(m, "v", n), v, 1.0);
      accumulate(logw, decode_mean(m.net("dec_x"), z, u), xr, 1.0);
      accumulate(logw, decode_mean(m.net("dec_y"), z, v), yr, 1.0);
      accumulate(logw, qz, z, -1.0);
      accumulate(logw, qu, u, -1.0);
      accumulate(logw, qv, v, -1.0);
      break;
    }
    case ModelKind::kJvae:
    case ModelKind::kJmvae: {
      const GaussianBatch qw = infer_rep(m.net("enc_joint"), concat_cols({&x, &y}), samples);
      const Tensor w = draw(qw, noise.z, "w");
      accumulate(logw, prior_batch(m, "w", n), w, 1.0);
      accumulate(logw, infer(m.net("dec_x"), w), xr, 1.0);
      accumulate(logw, infer(m.net("dec_y"), w), yr, 1.0);
      accumulate(logw, qw, w, -1.0);
      break;
    }
    case ModelKind::kVccaPrivate: {
      const GaussianBatch qz = infer_rep(m.net("enc_zx"), x, samples);
      const Tensor z = draw(qz, noise.z, "z");
      const GaussianBatch qu = infer_rep(m.net("enc_u"), x, samples);
      const Tensor u = draw(qu, noise.u, "u");
      const GaussianBatch qv = infer_rep(m.net("enc_v"), y, samples);
      const Tensor v = draw(qv, noise.v, "v");
      accumulate(logw, prior_batch(m, "z", n), z, 1.0);
      accumulate(logw, prior_batch(m, "u", n), u, 1.0);
      accumulate(logw, prior_batch(m, "v", n), v, 1.0);
      accumulate(logw, decode_mean(m.net("dec_x"), z, u), xr, 1.0);
      accumulate(logw, decode_mean(m.net("dec_y"), z, v), yr, 1.0);
      accumulate(logw, qz, z, -1.0);
      accumulate(logw, qu, u, -1.0);
      accumulate(logw, qv, v, -1.0);
      break;
    }
    default:
      throw NotApplicable(std::string(to_string(m.spec.kind)) + " has no joint likelihood");
  }
  return log_mean_exp(logw, samples);
}

std::vector<double> joint_ll_mc(const Model& m, const Tensor& x, const Tensor& y,
                                std::size_t samples, const LatentNoise& noise) {
  require_pairs(m, x, y, samples);
  const std::size_t n = x.rows() * samples;
  const Tensor xr = repeat_rows(x, samples);
  const Tensor yr = repeat_rows(y, samples);
  std::vector<double> logw(n, 0.0);
  switch (m.spec.kind) {
    case ModelKind::kWyner:
    case ModelKind::kVccaPrivate: {
      const Tensor z = draw(prior_batch(m, "z", n), noise.z, "z");
      const Tensor u = draw(prior_batch(m, "u", n), noise.u, "u");
      const Tensor v = draw(prior_batch(m, "v", n), noise.v, "v");
      accumulate(logw, decode_mean(m.net("dec_x"), z, u), xr, 1.0);
      accumulate(logw, decode_mean(m.net("dec_y"), z, v), yr, 1.0);
      break;
    }
    case ModelKind::kJvae:
    case ModelKind::kJmvae: {
      const Tensor w = draw(prior_batch(m, "w", n), noise.z, "w");
      accumulate(logw, infer(m.net("dec_x"), w), xr, 1.0);
      accumulate(logw, infer(m.net("dec_y"), w), yr, 1.0);
      break;
    }
    default:
      throw NotApplicable(std::string(to_string(m.spec.kind)) + " has no joint likelihood");
  }
  return log_mean_exp(logw, samples);
}

std::vector<double> cond_ll_is(const Model& m, const Tensor& x, const Tensor& y,
                               Direction d, std::size_t samples, const LatentNoise& noise) {
  require_pairs(m, x, y, samples);
  require_conditional(m, d);
  const bool fwd = d == Direction::kXToY;
  const Tensor& in_u = fwd ? x : y;
  const Tensor& out_u = fwd ? y : x;
  const Tensor in = repeat_rows(in_u, samples);
  const Tensor out = repeat_rows(fwd ? y : x, samples);
  const std::size_t n = in.rows();
  std::vector<double> logw(n, 0.0);
  switch (m.spec.kind) {
    case ModelKind::kWyner: {
      const SideNames s = side_names(d);
      const Tensor z = draw(infer_rep(m.net(s.enc_common), in_u, samples), noise.z, "z");
      const GaussianBatch ql = infer(m.net(s.enc_local), concat_cols({&z, &out}));
      const Tensor l = draw(ql, local_noise(noise, d), "local");
      accumulate(logw, prior_batch(m, s.prior_local, n), l, 1.0);
      accumulate(logw, decode_mean(m.net(s.dec), z, l), out, 1.0);
      accumulate(logw, ql, l, -1.0);
      break;
    }
    case ModelKind::kJvae:
    case ModelKind::kJmvae: {
      const GaussianBatch qw = infer_rep(m.net("enc_joint"), concat_cols({&x, &y}), samples);
      const Tensor w = draw(qw, noise.z, "w");
      accumulate(logw, infer_rep(m.net(fwd ? "enc_wx" : "enc_wy"), in_u, samples), w, 1.0);
      accumulate(logw, infer(m.net(fwd ? "dec_y" : "dec_x"), w), out, 1.0);
      accumulate(logw, qw, w, -1.0);
      break;
    }
    case ModelKind::kVccaPrivate: {
      const SideNames s = side_names(d);
      const Tensor z = draw(infer_rep(m.net(s.enc_common), in_u, samples), noise.z, "z");
      const GaussianBatch ql = infer_rep(m.net(s.enc_local), out_u, samples);
      const Tensor l = draw(ql, local_noise(noise, d), "local");
      accumulate(logw, prior_batch(m, s.prior_local, n), l, 1.0);
      accumulate(logw, decode_mean(m.net(s.dec), z, l), out, 1.0);
      accumulate(logw, ql, l, -1.0);
      break;
    }
    case ModelKind::kCvae: {
      const GaussianBatch qv = infer_rep(m.net("enc_v"), concat_cols({&out_u, &in_u}), samples);
      const Tensor v = draw(qv, noise.z, "v");
      accumulate(logw, infer_rep(m.net("prior_v"), in_u, samples), v, 1.0);
      accumulate(logw, infer(m.net("dec_y"), concat_cols({&v, &in})), out, 1.0);
      accumulate(logw, qv, v, -1.0);
      break;
    }
    case ModelKind::kVib: {
      const Tensor z = draw(infer_rep(m.net("enc_zx"), in_u, samples), noise.z, "z");
      accumulate(logw, infer(m.net("dec_y"), z), out, 1.0);
      break;
    }
  }
  return log_mean_exp(logw, samples);
}

std::vector<double> cond_ll_mc(const Model& m, const Tensor& x, const Tensor& y,
                               Direction d, std::size_t samples, const LatentNoise& noise) {
  require_pairs(m, x, y, samples);
  require_conditional(m, d);
  const bool fwd = d == Direction::kXToY;
  const Tensor& in_u = fwd ? x : y;
  const Tensor in = repeat_rows(in_u, samples);
  const Tensor out = repeat_rows(fwd ? y : x, samples);
  const std::size_t n = in.rows();
  std::vector<double> logw(n, 0.0);
  switch (m.spec.kind) {
    case ModelKind::kWyner:
    case ModelKind::kVccaPrivate: {
      const SideNames s = side_names(d);
      const Tensor z = draw(infer_rep(m.net(s.enc_common), in_u, samples), noise.z, "z");
      const Tensor l = draw(prior_batch(m, s.prior_local, n), local_noise(noise, d), "local");
      accumulate(logw, decode_mean(m.net(s.dec), z, l), out, 1.0);
      break;
    }
    case ModelKind::kJvae:
    case ModelKind::kJmvae: {
      const Tensor w = draw(infer_rep(m.net(fwd ? "enc_wx" : "enc_wy"), in_u, samples), noise.z, "w");
      accumulate(logw, infer(m.net(fwd ? "dec_y" : "dec_x"), w), out, 1.0);
      break;
    }
    case ModelKind::kCvae: {
      const Tensor v = draw(infer_rep(m.net("prior_v"), in_u, samples), noise.z, "v");
      accumulate(logw, infer(m.net("dec_y"), concat_cols({&v, &in})), out, 1.0);
      break;
    }
    case ModelKind::kVib: {
      const Tensor z = draw(infer_rep(m.net("enc_zx"), in_u, samples), noise.z, "z");
      accumulate(logw, infer(m.net("dec_y"), z), out, 1.0);
      break;
    }
  }
  return log_mean_exp(logw, samples);
}

std::vector<double> joint_ll_is(const Model& m, const Tensor& x, const Tensor& y,
                                std::size_t samples, Rng& rng) {
  return chunked(m, x, y, samples, rng, [&](const Tensor& xs, const Tensor& ys, const LatentNoise& n) {
    return joint_ll_is(m, xs, ys, samples, n);
  });
}

std::vector<double> joint_ll_mc(const Model& m, const Tensor& x, const Tensor& y,
                                std::size_t samples, Rng& rng) {
  return chunked(m, x, y, samples, rng, [&](const Tensor& xs, const Tensor& ys, const LatentNoise& n) {
    return joint_ll_mc(m, xs, ys, samples, n);
  });
}

std::vector<double> cond_ll_is(const Model& m, const Tensor& x, const Tensor& y, Direction d,
                               std::size_t samples, Rng& rng) {
  require_conditional(m, d);
  return chunked(m, x, y, samples, rng, [&](const Tensor& xs, const Tensor& ys, const LatentNoise& n) {
    return cond_ll_is(m, xs, ys, d, samples, n);
  });
}

std::vector<double> cond_ll_mc(const Model& m, const Tensor& x, const Tensor& y, Direction d,
                               std::size_t samples, Rng& rng) {
  require_conditional(m, d);
  return chunked(m, x, y, samples, rng, [&](const Tensor& xs, const Tensor& ys, const LatentNoise& n) {
    return cond_ll_mc(m, xs, ys, d, samples, n);
  });
}

EvalReport evaluate(const Model& m, const Tensor& x, const Tensor& y, const EvalOptions& opt) {
  require_pairs(m, x, y, opt.samples);
  const Rng root = Rng(opt.seed).split("evaluation");
  auto nll = [](const std::vector<double>& ll) {
    double total = 0.0;
    for (double v : ll) total += v;
    return -total / static_cast<double>(ll.size());
  };
  EvalReport r;
  r.n_importance = opt.samples;
  r.n_eval = x.rows();
  const ModelKind kind = m.spec.kind;
  if (opt.mi && has_mi(kind)) r.mi_z = mi_estimate(m, x, y);
  if (opt.joint && has_joint_likelihood(kind)) {
    Rng rng = root.split("joint");
    r.joint_nll = nll(joint_ll_is(m, x, y, opt.samples, rng));
  }
  if (opt.cond_x2y && has_conditional(kind, Direction::kXToY) && m.marginal_x_ready) {
    Rng rng = root.split("x2y");
    r.cond_nll_x2y = nll(cond_ll_is(m, x, y, Direction::kXToY, opt.samples, rng));
  }
  if (opt.cond_y2x && has_conditional(kind, Direction::kYToX) && m.marginal_y_ready) {
    Rng rng = root.split("y2x");
    r.cond_nll_y2x = nll(cond_ll_is(m, x, y, Direction::kYToX, opt.samples, rng));
  }
  return r;
}

}  // namespace wyner
