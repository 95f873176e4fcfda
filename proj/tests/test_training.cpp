// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "support.hpp"
#include "wyner/training.hpp"

using namespace wyner;
using namespace wyner::testing;

namespace {

ModelSpec small_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.z_dim = s.u_dim = s.v_dim = 2;
  s.hidden_width = 16;
  s.hidden_depth = 1;
  return s;
}

TrainConfig quick_config(std::size_t joint_epochs, std::size_t marginal_epochs = 1) {
  TrainConfig c;
  c.seed = 5;
  c.schedule.joint_epochs = joint_epochs;
  c.schedule.marginal_epochs = marginal_epochs;
  c.schedule.batch_size = 50;
  c.schedule.eval_every = 5;
  c.adam.lr = 1e-3;
  c.eval.samples = 5;
  c.eval.seed = 11;
  c.eval_rows = 40;
  return c;
}

PairDataset small_data(std::size_t n_train = 300, std::size_t n_test = 100) {
  return generate(DatasetSpec{n_train, n_test, 3});
}

}  // namespace

TEST_CASE("adam: zero learning rate and zero gradient leave parameters unchanged") {
  Tensor p = Tensor::row({1.0, -2.0, 3.0});
  const Tensor saved = p;
  std::vector<NamedParam> params{{"p", &p}};

  AdamState zero_lr{AdamConfig{0.0}, 0, {}, {}};
  adam_step(zero_lr, params, std::vector<Tensor>{Tensor::row({1.0, 5.0, -3.0})});
  CHECK(std::ranges::equal(p.data(), saved.data()));

  AdamState zero_grad;
  for (int i = 0; i < 3; ++i) adam_step(zero_grad, params, std::vector<Tensor>{Tensor::row({0.0, 0.0, 0.0})});
  CHECK(std::ranges::equal(p.data(), saved.data()));
  CHECK(zero_grad.step == 3);
}

TEST_CASE("adam: bias-corrected steps move by the learning rate") {
  Tensor p = Tensor::row({1.0, 1.0});
  std::vector<NamedParam> params{{"p", &p}};
  AdamState s;
  const double lr = s.config.lr;
  adam_step(s, params, std::vector<Tensor>{Tensor::row({1.0, -4.0})});
  CHECK(p[0] == doctest::Approx(1.0 - lr / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 + lr * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));

  // Hand-iterated moments for a varying gradient.
  double m = 0.0, v = 0.0, theta = 0.0;
  Tensor q = Tensor::row({0.0});
  std::vector<NamedParam> qp{{"q", &q}};
  AdamState t;
  for (int k = 1; k <= 20; ++k) {
    const double g = std::sin(k) + 0.3;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= lr * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
    adam_step(t, qp, std::vector<Tensor>{Tensor::row({g})});
  }
  CHECK(q[0] == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("adam: a non-finite gradient is rejected before any update") {
  Tensor a = Tensor::row({1.0});
  Tensor b = Tensor::row({2.0});
  std::vector<NamedParam> params{{"a", &a}, {"b", &b}};
  AdamState s;
  CHECK_THROWS_AS(adam_step(s, params,
                            std::vector<Tensor>{Tensor::row({1.0}),
                                                Tensor::row({std::numeric_limits<double>::quiet_NaN()})}),
                  NonFiniteGradient);
  CHECK(a[0] == 1.0);
  CHECK(s.step == 0);
  CHECK_THROWS_AS(adam_step(s, params, std::vector<Tensor>{Tensor::row({1.0})}), ShapeMismatch);
}

TEST_CASE("stage trainable sets") {
  CHECK(stage_trains(ModelKind::kWyner, Stage::kJoint, "enc_joint.hidden0.weight"));
  CHECK_FALSE(stage_trains(ModelKind::kWyner, Stage::kJoint, "enc_zx.hidden0.weight"));
  CHECK(stage_trains(ModelKind::kWyner, Stage::kMarginalX, "enc_zx.mean.bias"));
  CHECK(stage_trains(ModelKind::kWyner, Stage::kMarginalX, "enc_u.mean.bias"));
  CHECK_FALSE(stage_trains(ModelKind::kWyner, Stage::kMarginalX, "dec_x.mean.bias"));
  CHECK_FALSE(stage_trains(ModelKind::kWyner, Stage::kMarginalX, "prior.z"));
  CHECK(stage_trains(ModelKind::kWyner, Stage::kMarginalY, "enc_v.mean.bias"));
  CHECK(stage_trains(ModelKind::kJvae, Stage::kMarginalY, "enc_wy.mean.bias"));
  CHECK_FALSE(stage_trains(ModelKind::kJvae, Stage::kJoint, "enc_wx.mean.bias"));
  CHECK(stage_trains(ModelKind::kVib, Stage::kJoint, "enc_zx.mean.bias"));
}

TEST_CASE("zero epochs leave the model untouched and emit only the initial row") {
  Model m = init_model(small_spec(ModelKind::kWyner), 1);
  const std::uint64_t before = parameter_hash(m);
  const std::vector<MetricsRow> h = train_joint(m, small_data(), quick_config(0));
  CHECK(parameter_hash(m) == before);
  REQUIRE(h.size() == 1);
  CHECK(h[0].epoch == 0);
  CHECK(h[0].split == "test");
  CHECK(h[0].joint_nll.has_value());
}

TEST_CASE("training is deterministic and follows the row schedule") {
  const PairDataset data = small_data();
  Model a = init_model(small_spec(ModelKind::kWyner), 1);
  Model b = init_model(small_spec(ModelKind::kWyner), 1);
  const std::vector<MetricsRow> ha = train_joint(a, data, quick_config(7));
  const std::vector<MetricsRow> hb = train_joint(b, data, quick_config(7));
  CHECK(parameter_hash(a) == parameter_hash(b));
  REQUIRE(ha.size() == hb.size());
  // epoch-0 test, 7 train rows, tests at 5 and 7.
  CHECK(ha.size() == 10);
  std::size_t tests = 0;
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].loss.total == hb[i].loss.total);
    if (ha[i].split == "test") {
      ++tests;
      CHECK(*ha[i].joint_nll == *hb[i].joint_nll);
    }
  }
  CHECK(tests == 3);
  CHECK(ha.back().epoch == 7);

  Model c = init_model(small_spec(ModelKind::kWyner), 1);
  TrainConfig other = quick_config(7);
  other.seed = 6;
  train_joint(c, data, other);
  CHECK(parameter_hash(c) != parameter_hash(a));
}

TEST_CASE("lambda = 0 training lowers the training objective") {
  const PairDataset data = generate(DatasetSpec{5000, 200, 4});
  Model m = init_model(small_spec(ModelKind::kWyner), 2);
  TrainConfig c = quick_config(20);
  c.weights.lambda = 0.0;
  c.evaluate = false;
  const std::vector<MetricsRow> h = train_joint(m, data, c);
  REQUIRE(h.size() == 20);
  CHECK(h.back().loss.total < h.front().loss.total);
  CHECK(h.back().loss.mi_term == 0.0);
}

TEST_CASE("every kind reduces its test loss on a small problem") {
  const PairDataset data = small_data(1000, 200);
  for (ModelKind kind : {ModelKind::kWyner, ModelKind::kJvae, ModelKind::kJmvae, ModelKind::kCvae,
                         ModelKind::kVccaPrivate, ModelKind::kVib}) {
    CAPTURE(to_string(kind));
    Model m = init_model(small_spec(kind), 3);
    TrainConfig c = quick_config(10);
    c.eval.joint = c.eval.mi = c.eval.cond_x2y = c.eval.cond_y2x = false;
    const std::vector<MetricsRow> h = train_joint(m, data, c);
    CHECK(h.back().split == "test");
    CHECK(h.back().loss.total < h.front().loss.total);
  }
}

TEST_CASE("marginal stages train only their encoders") {
  const PairDataset data = small_data();
  for (ModelKind kind : {ModelKind::kWyner, ModelKind::kJvae}) {
    Model m = init_model(small_spec(kind), 4);
    train_joint(m, data, quick_config(2));
    CHECK_FALSE(m.marginal_x_ready);
    const auto shared = [kind](std::string_view n) {
      return !stage_trains(kind, Stage::kMarginalX, n) && !stage_trains(kind, Stage::kMarginalY, n);
    };
    const std::uint64_t shared_before = parameter_hash(m, shared);
    const std::uint64_t all_before = parameter_hash(m);
    const std::vector<MetricsRow> h = train_marginals(m, data, quick_config(2, 3));
    CHECK(parameter_hash(m, shared) == shared_before);
    CHECK(parameter_hash(m) != all_before);
    CHECK(m.marginal_x_ready);
    CHECK(m.marginal_y_ready);
    std::size_t x_rows = 0, y_rows = 0;
    for (const MetricsRow& r : h) {
      if (r.stage == Stage::kMarginalX) {
        ++x_rows;
        CHECK_FALSE(r.joint_nll.has_value());
        if (r.split == "test") CHECK(r.cond_nll_x2y.has_value());
        CHECK_FALSE(r.cond_nll_y2x.has_value());
      } else {
        REQUIRE(r.stage == Stage::kMarginalY);
        ++y_rows;
        if (r.split == "test") CHECK(r.cond_nll_y2x.has_value());
      }
    }
    CHECK(x_rows == 4);  // 3 train rows, 1 test row at the last epoch
    CHECK(y_rows == 4);
  }
}

TEST_CASE("marginal stage is deterministic and rejected for single-stage kinds") {
  const PairDataset data = small_data();
  Model a = init_model(small_spec(ModelKind::kWyner), 4);
  Model b = init_model(small_spec(ModelKind::kWyner), 4);
  train_marginals(a, data, quick_config(0, 2));
  train_marginals(b, data, quick_config(0, 2));
  CHECK(parameter_hash(a) == parameter_hash(b));
  for (ModelKind kind : {ModelKind::kCvae, ModelKind::kVib, ModelKind::kJmvae, ModelKind::kVccaPrivate}) {
    Model m = init_model(small_spec(kind), 1);
    CHECK_THROWS_AS(train_marginals(m, data, quick_config(0, 2)), NotApplicable);
  }
}

TEST_CASE("divergence restores the last completed epoch") {
  PairDataset data = small_data(100, 20);
  Model m = init_model(small_spec(ModelKind::kWyner), 1);
  const std::uint64_t before = parameter_hash(m);
  data.train.x.raw()[7] = 1e200;
  TrainConfig c = quick_config(3);
  c.evaluate = false;
  CHECK_THROWS_AS(train_joint(m, data, c), DivergenceDetected);
  CHECK(parameter_hash(m) == before);
}

TEST_CASE("schedule and dataset contracts") {
  Model m = init_model(small_spec(ModelKind::kWyner), 1);
  TrainConfig c = quick_config(1);
  c.schedule.batch_size = 0;
  CHECK_THROWS_AS(train_joint(m, small_data(), c), InvalidSpec);
  PairDataset empty = small_data();
  empty.train = PairSet{Tensor({0, 10}), Tensor({0, 10}), {}};
  CHECK_THROWS_AS(train_joint(m, empty, quick_config(1)), EmptyDataset);
}

TEST_CASE("split loss is a batch-weighted mean") {
  const PairDataset data = small_data(100, 30);
  const Model m = init_model(small_spec(ModelKind::kVib), 1);
  Rng a(1), b(1);
  const LossBreakdown whole = split_loss(m, data.test, Stage::kJoint, LossWeights{}, 30, a);
  const LossBreakdown parts = split_loss(m, data.test, Stage::kJoint, LossWeights{}, 30, b);
  CHECK(whole.total == parts.total);
  Rng c(2);
  const LossBreakdown batched = split_loss(m, data.test, Stage::kJoint, LossWeights{}, 7, c);
  CHECK(std::isfinite(batched.total));
  CHECK_THROWS_AS(split_loss(m, data.test, Stage::kJoint, LossWeights{}, 0, c), InvalidSpec);
}
