// SPDX-License-Identifier: Apache-2.0
#include "wyner/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

namespace wyner {

namespace {

using Clock = std::chrono::steady_clock;

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

void require_schedule(const Schedule& s) {
  if (s.batch_size == 0) throw InvalidSpec("batch size must be positive");
  if (s.eval_every == 0) throw InvalidSpec("eval_every must be positive");
}

/// Running batch-size weighted sum of breakdowns.
struct BreakdownMean {
  LossBreakdown sum;
  double weight = 0.0;

  void add(const LossBreakdown& b, double w) {
    sum.total += w * b.total;
    sum.rec_x += w * b.rec_x;
    sum.rec_y += w * b.rec_y;
    sum.reg_z += w * b.reg_z;
    sum.reg_u += w * b.reg_u;
    sum.reg_v += w * b.reg_v;
    sum.mi_term += w * b.mi_term;
    sum.extras += w * b.extras;
    weight += w;
  }

  LossBreakdown mean() const {
    LossBreakdown m = sum;
    for (double* f : {&m.total, &m.rec_x, &m.rec_y, &m.reg_z, &m.reg_u, &m.reg_v, &m.mi_term,
                      &m.extras}) {
      *f /= weight;
    }
    return m;
  }
};

PairSet head(const PairSet& set, std::size_t rows) {
  if (rows == 0 || rows >= set.size()) return set;
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  return set.gather(idx);
}

struct Snapshot {
  std::vector<Tensor> values;

  explicit Snapshot(Model& m) {
    for (const NamedParam& p : m.parameters()) values.push_back(*p.tensor);
  }
  void restore(Model& m) const {
    std::size_t i = 0;
    for (const NamedParam& p : m.parameters()) *p.tensor = values[i++];
  }
};

/// Trains `stage` for `epochs` epochs, appending rows to `history`.
void run_stage(Model& model, const PairDataset& data, const TrainConfig& config, Stage stage,
               std::size_t epochs, std::vector<MetricsRow>& history) {
  const Schedule& sched = config.schedule;
  const ModelKind kind = model.spec.kind;
  const auto trainable = [kind, stage](std::string_view name) {
    return stage_trains(kind, stage, name);
  };
  std::vector<NamedParam> all = model.parameters();
  std::map<std::string, Tensor*> by_name;
  for (const NamedParam& p : all) by_name.emplace(p.name, p.tensor);

  const PairSet test = head(data.test, config.eval_rows);
  EvalOptions eval = config.eval;
  if (stage != Stage::kJoint) {
    eval.joint = false;
    eval.mi = false;
    eval.cond_x2y = eval.cond_x2y && stage == Stage::kMarginalX;
    eval.cond_y2x = eval.cond_y2x && stage == Stage::kMarginalY;
  }
  const Rng stage_rng = Rng(config.seed).split("training").split(to_string(stage));
  const auto start = Clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  auto test_row = [&](std::size_t epoch) {
    MetricsRow row;
    row.epoch = epoch;
    row.stage = stage;
    row.split = "test";
    Rng loss_rng = Rng(config.eval.seed).split("test-loss").split(to_string(stage));
    row.loss = split_loss(model, test, stage, config.weights, sched.batch_size, loss_rng);
    const EvalReport r = evaluate(model, test.x, test.y, eval);
    row.mi_z = r.mi_z;
    row.joint_nll = r.joint_nll;
    row.cond_nll_x2y = r.cond_nll_x2y;
    row.cond_nll_y2x = r.cond_nll_y2x;
    row.wall_seconds = elapsed();
    history.push_back(row);
  };

  if (stage == Stage::kJoint && config.evaluate) test_row(0);

  AdamState adam{config.adam, 0, {}, {}};
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const Rng epoch_rng = stage_rng.split(static_cast<std::uint64_t>(epoch));
    Rng noise_rng = epoch_rng.split("noise");
    const std::uint64_t shuffle_seed = epoch_rng.split("shuffle-seed").next_u64();
    const Snapshot snapshot(model);
    BreakdownMean epoch_loss;
    try {
      for (const std::vector<std::size_t>& idx :
           batches(data.train.size(), sched.batch_size, shuffle_seed)) {
        const PairSet batch = data.train.gather(idx);
        const LatentNoise noise = draw_noise(model.spec, idx.size(), noise_rng);
        Tape tape;
        ParamBinder binder(tape, trainable);
        const Loss loss = stage_loss(binder, model, batch.x, batch.y, stage, config.weights, noise);
        if (!std::isfinite(loss.parts.total)) throw NonFiniteValue("training loss is not finite");
        tape.backward(loss.total);
        std::vector<NamedParam> params;
        std::vector<Tensor> grads;
        for (const auto& [name, var] : binder.bound()) {
          if (!binder.is_trainable(name)) continue;
          params.push_back(NamedParam{name, by_name.at(name)});
          grads.push_back(tape.grad(var));
        }
        adam_step(adam, params, grads);
        epoch_loss.add(loss.parts, static_cast<double>(idx.size()));
      }
    } catch (const NonFiniteValue& e) {
      snapshot.restore(model);
      throw DivergenceDetected(std::string(to_string(stage)) + " stage diverged at epoch " +
                               std::to_string(epoch) + ": " + e.what());
    } catch (const NonFiniteGradient& e) {
      snapshot.restore(model);
      throw DivergenceDetected(std::string(to_string(stage)) + " stage diverged at epoch " +
                               std::to_string(epoch) + ": " + e.what());
    }
    MetricsRow row;
    row.epoch = epoch;
    row.stage = stage;
    row.split = "train";
    row.loss = epoch_loss.mean();
    row.wall_seconds = elapsed();
    history.push_back(row);
    if (config.evaluate && (epoch % sched.eval_every == 0 || epoch == epochs)) test_row(epoch);
  }
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kJoint: return "joint";
    case Stage::kMarginalX: return "marginal_x";
    case Stage::kMarginalY: return "marginal_y";
  }
  return "unknown";
}

void adam_step(AdamState& state, std::span<const NamedParam> params,
               std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw ShapeMismatch("adam_step: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->same_shape(grads[i])) {
      throw ShapeMismatch("adam_step: gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw NonFiniteGradient("non-finite gradient for " + params[i].name);
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    const Tensor& g = grads[i];
    auto mi = state.m.try_emplace(params[i].name, Tensor::zeros_like(p)).first;
    auto vi = state.v.try_emplace(params[i].name, Tensor::zeros_like(p)).first;
    double* m = mi->second.raw();
    double* v = vi->second.raw();
    double* w = p.raw();
    const double* gr = g.raw();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gr[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gr[k] * gr[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

bool stage_trains(ModelKind kind, Stage stage, std::string_view name) {
  const bool two_stage = kind == ModelKind::kWyner || kind == ModelKind::kJvae;
  if (stage == Stage::kJoint) {
    if (!two_stage) return true;
    if (kind == ModelKind::kWyner) return !starts_with(name, "enc_zx.") && !starts_with(name, "enc_zy.");
    return !starts_with(name, "enc_wx.") && !starts_with(name, "enc_wy.");
  }
  if (!two_stage) return false;
  const bool x = stage == Stage::kMarginalX;
  if (kind == ModelKind::kWyner) {
    return x ? starts_with(name, "enc_zx.") || starts_with(name, "enc_u.")
             : starts_with(name, "enc_zy.") || starts_with(name, "enc_v.");
  }
  return starts_with(name, x ? "enc_wx." : "enc_wy.");
}

Loss stage_loss(ParamBinder& b, const Model& m, const Tensor& x, const Tensor& y, Stage stage,
                const LossWeights& w, const LatentNoise& noise) {
  const ModelKind kind = m.spec.kind;
  if (stage == Stage::kJoint) {
    switch (kind) {
      case ModelKind::kWyner: return wyner_joint_loss(b, m, x, y, w.lambda, w.beta, noise);
      case ModelKind::kJvae: return jvae_joint_loss(b, m, x, y, noise);
      case ModelKind::kJmvae: return jmvae_loss(b, m, x, y, w.alpha, noise);
      case ModelKind::kCvae: return cvae_loss(b, m, x, y, noise);
      case ModelKind::kVccaPrivate:
        return vcca_private_loss(b, m, x, y, w.vcca_direction, w.mu_mix, noise);
      case ModelKind::kVib: return vib_loss(b, m, x, y, w.beta_ib, noise);
    }
  }
  const bool side_x = stage == Stage::kMarginalX;
  if (kind == ModelKind::kWyner) {
    return wyner_marginal_loss(b, m, x, y, side_x ? Side::kX : Side::kY, noise);
  }
  if (kind == ModelKind::kJvae) {
    const VaeComponents parts = side_x ? VaeComponents{"enc_wx", "w", "dec_x"}
                                       : VaeComponents{"enc_wy", "w", "dec_y"};
    return vanilla_vae_loss(b, m, parts, side_x ? x : y, noise.z);
  }
  throw NotApplicable(std::string(to_string(kind)) + " has no marginal stage");
}

LossBreakdown split_loss(const Model& model, const PairSet& split, Stage stage,
                         const LossWeights& weights, std::size_t batch_size, Rng& rng) {
  if (split.size() == 0) throw EmptyTestSet("cannot evaluate a loss on an empty split");
  if (batch_size == 0) throw InvalidSpec("batch size must be positive");
  BreakdownMean acc;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < split.size(); begin += batch_size) {
    const std::size_t end = std::min(split.size(), begin + batch_size);
    idx.resize(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    const PairSet batch = split.gather(idx);
    const LatentNoise noise = draw_noise(model.spec, idx.size(), rng);
    Tape tape;
    ParamBinder binder(tape, [](std::string_view) { return false; });
    acc.add(stage_loss(binder, model, batch.x, batch.y, stage, weights, noise).parts,
            static_cast<double>(idx.size()));
  }
  return acc.mean();
}

std::vector<MetricsRow> train_joint(Model& model, const PairDataset& data,
                                    const TrainConfig& config) {
  require_schedule(config.schedule);
  if (data.train.size() == 0 || data.test.size() == 0) throw EmptyDataset("dataset is empty");
  std::vector<MetricsRow> history;
  run_stage(model, data, config, Stage::kJoint, config.schedule.joint_epochs, history);
  return history;
}

std::vector<MetricsRow> train_marginals(Model& model, const PairDataset& data,
                                        const TrainConfig& config) {
  const ModelKind kind = model.spec.kind;
  if (kind != ModelKind::kWyner && kind != ModelKind::kJvae) {
    throw NotApplicable(std::string(to_string(kind)) + " has no marginal encoder stage");
  }
  require_schedule(config.schedule);
  if (data.train.size() == 0 || data.test.size() == 0) throw EmptyDataset("dataset is empty");
  std::vector<MetricsRow> history;
  for (Stage stage : {Stage::kMarginalX, Stage::kMarginalY}) {
    const auto frozen = [kind, stage](std::string_view name) {
      return !stage_trains(kind, stage, name);
    };
    const std::uint64_t before = parameter_hash(model, frozen);
    (stage == Stage::kMarginalX ? model.marginal_x_ready : model.marginal_y_ready) = true;
    run_stage(model, data, config, stage, config.schedule.marginal_epochs, history);
    if (parameter_hash(model, frozen) != before) {
      throw FrozenParamTouched(std::string(to_string(stage)) +
                               " stage modified a parameter outside its trainable set");
    }
  }
  return history;
}

std::uint64_t parameter_hash(const Model& model,
                             const std::function<bool(std::string_view)>& filter) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const NamedConstParam& p : model.parameters()) {
    if (filter && !filter(p.name)) continue;
    mix(p.name.data(), p.name.size());
    mix(p.tensor->raw(), p.tensor->size() * sizeof(double));
  }
  return h;
}

}  // namespace wyner
