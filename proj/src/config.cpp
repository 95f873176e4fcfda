// SPDX-License-Identifier: Apache-2.0
#include "wyner/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace wyner {

namespace {

using nlohmann::json;

void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigInvalid(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigInvalid("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigInvalid("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigInvalid("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigInvalid("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ConfigInvalid(where + "." + key + " has the wrong type");
  }
}

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "leaky_relu"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  throw ConfigInvalid("unknown activation '" + s + "'");
}

std::string_view to_string(VccaDirection d) {
  switch (d) {
    case VccaDirection::kX: return "x";
    case VccaDirection::kY: return "y";
    case VccaDirection::kBi: return "bi";
  }
  return "bi";
}

VccaDirection parse_direction(const std::string& s) {
  if (s == "x") return VccaDirection::kX;
  if (s == "y") return VccaDirection::kY;
  if (s == "bi") return VccaDirection::kBi;
  throw ConfigInvalid("unknown vcca_direction '" + s + "'");
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed JSON: ") + e.what());
  }
}

json spec_to_json(const ModelSpec& s) {
  return json{{"model_kind", std::string(to_string(s.kind))},
              {"dims", {{"x", s.x_dim}, {"y", s.y_dim}, {"z", s.z_dim}, {"u", s.u_dim}, {"v", s.v_dim}}},
              {"hidden", {{"width", s.hidden_width},
                          {"depth", s.hidden_depth},
                          {"activation", std::string(to_string(s.activation))}}},
              {"decoder_log_var", s.decoder_log_var}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  const json root = parse_json(text);
  only_keys(root,
            {"model_kind", "dataset", "latent_dims", "hidden", "lambda", "beta", "beta_ib",
             "alpha_jmvae", "mu_mix", "vcca_direction", "schedule", "optimizer", "seeds",
             "importance_samples", "eval_rows", "output_dir"},
            "config");
  ExperimentConfig c;
  if (root.contains("model_kind")) {
    std::string kind;
    read(root, "model_kind", kind, "config");
    try {
      c.model.kind = parse_model_kind(kind);
    } catch (const InvalidSpec& e) {
      throw ConfigInvalid(e.what());
    }
  }
  if (root.contains("dataset")) {
    const json& d = root["dataset"];
    only_keys(d, {"n_train", "n_test", "seed"}, "dataset");
    read(d, "n_train", c.dataset.n_train, "dataset");
    read(d, "n_test", c.dataset.n_test, "dataset");
    read(d, "seed", c.dataset.seed, "dataset");
  }
  if (root.contains("latent_dims")) {
    const json& d = root["latent_dims"];
    only_keys(d, {"z", "u", "v"}, "latent_dims");
    read(d, "z", c.model.z_dim, "latent_dims");
    read(d, "u", c.model.u_dim, "latent_dims");
    read(d, "v", c.model.v_dim, "latent_dims");
  }
  if (root.contains("hidden")) {
    const json& h = root["hidden"];
    only_keys(h, {"width", "depth", "activation"}, "hidden");
    read(h, "width", c.model.hidden_width, "hidden");
    read(h, "depth", c.model.hidden_depth, "hidden");
    if (h.contains("activation")) {
      std::string a;
      read(h, "activation", a, "hidden");
      c.model.activation = parse_activation(a);
    }
  }
  read(root, "lambda", c.weights.lambda, "config");
  read(root, "beta", c.weights.beta, "config");
  read(root, "beta_ib", c.weights.beta_ib, "config");
  read(root, "alpha_jmvae", c.weights.alpha, "config");
  read(root, "mu_mix", c.weights.mu_mix, "config");
  if (root.contains("vcca_direction")) {
    std::string d;
    read(root, "vcca_direction", d, "config");
    c.weights.vcca_direction = parse_direction(d);
  }
  if (root.contains("schedule")) {
    const json& s = root["schedule"];
    only_keys(s, {"joint_epochs", "marginal_epochs", "batch_size", "eval_every"}, "schedule");
    read(s, "joint_epochs", c.schedule.joint_epochs, "schedule");
    read(s, "marginal_epochs", c.schedule.marginal_epochs, "schedule");
    read(s, "batch_size", c.schedule.batch_size, "schedule");
    read(s, "eval_every", c.schedule.eval_every, "schedule");
  }
  if (root.contains("optimizer")) {
    const json& o = root["optimizer"];
    only_keys(o, {"lr", "beta1", "beta2", "eps"}, "optimizer");
    read(o, "lr", c.optimizer.lr, "optimizer");
    read(o, "beta1", c.optimizer.beta1, "optimizer");
    read(o, "beta2", c.optimizer.beta2, "optimizer");
    read(o, "eps", c.optimizer.eps, "optimizer");
  }
  if (root.contains("seeds")) {
    const json& s = root["seeds"];
    if (!s.is_array()) throw ConfigInvalid("seeds must be an array");
    c.seeds.clear();
    for (const json& v : s) {
      if (!v.is_number_unsigned()) throw ConfigInvalid("seeds must be non-negative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  read(root, "importance_samples", c.importance_samples, "config");
  read(root, "eval_rows", c.eval_rows, "config");
  read(root, "output_dir", c.output_dir, "config");
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate(const ExperimentConfig& c) {
  const ModelSpec& m = c.model;
  if (m.z_dim == 0 || m.u_dim == 0 || m.v_dim == 0) throw ConfigInvalid("latent dims must be positive");
  if (m.hidden_width == 0) throw ConfigInvalid("hidden width must be positive");
  if (c.dataset.n_train == 0 || c.dataset.n_test == 0) throw ConfigInvalid("dataset sizes must be positive");
  const LossWeights& w = c.weights;
  if (!(w.lambda >= 0.0)) throw ConfigInvalid("lambda must be non-negative");
  if (!(w.beta >= 1.0)) throw ConfigInvalid("beta must be at least 1");
  if (!(w.beta_ib > 0.0)) throw ConfigInvalid("beta_ib must be positive");
  if (!(w.alpha >= 0.0)) throw ConfigInvalid("alpha_jmvae must be non-negative");
  if (!(w.mu_mix >= 0.0 && w.mu_mix <= 1.0)) throw ConfigInvalid("mu_mix must lie in [0, 1]");
  if (c.schedule.batch_size == 0) throw ConfigInvalid("batch_size must be positive");
  if (c.schedule.eval_every == 0) throw ConfigInvalid("eval_every must be positive");
  if (!(c.optimizer.lr >= 0.0) || !(c.optimizer.eps > 0.0) || !(c.optimizer.beta1 >= 0.0) ||
      !(c.optimizer.beta1 < 1.0) || !(c.optimizer.beta2 >= 0.0) || !(c.optimizer.beta2 < 1.0)) {
    throw ConfigInvalid("optimizer hyperparameters out of range");
  }
  if (c.seeds.empty()) throw ConfigInvalid("at least one seed is required");
  if (c.importance_samples == 0) throw ConfigInvalid("importance_samples must be at least 1");
  if (c.output_dir.empty()) throw ConfigInvalid("output_dir must not be empty");
}

std::string to_json(const ExperimentConfig& c) {
  const ModelSpec& m = c.model;
  json j{
      {"model_kind", std::string(to_string(m.kind))},
      {"dataset", {{"n_train", c.dataset.n_train}, {"n_test", c.dataset.n_test}, {"seed", c.dataset.seed}}},
      {"latent_dims", {{"z", m.z_dim}, {"u", m.u_dim}, {"v", m.v_dim}}},
      {"hidden", {{"width", m.hidden_width}, {"depth", m.hidden_depth},
                  {"activation", std::string(to_string(m.activation))}}},
      {"lambda", c.weights.lambda},
      {"beta", c.weights.beta},
      {"beta_ib", c.weights.beta_ib},
      {"alpha_jmvae", c.weights.alpha},
      {"mu_mix", c.weights.mu_mix},
      {"vcca_direction", std::string(to_string(c.weights.vcca_direction))},
      {"schedule", {{"joint_epochs", c.schedule.joint_epochs},
                    {"marginal_epochs", c.schedule.marginal_epochs},
                    {"batch_size", c.schedule.batch_size},
                    {"eval_every", c.schedule.eval_every}}},
      {"optimizer", {{"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1},
                     {"beta2", c.optimizer.beta2}, {"eps", c.optimizer.eps}}},
      {"seeds", c.seeds},
      {"importance_samples", c.importance_samples},
      {"eval_rows", c.eval_rows},
      {"output_dir", c.output_dir},
  };
  return j.dump(2);
}

std::string model_spec_json(const ModelSpec& spec) { return spec_to_json(spec).dump(); }

ModelSpec parse_model_spec(const std::string& text) {
  const json j = parse_json(text);
  only_keys(j, {"model_kind", "dims", "hidden", "decoder_log_var"}, "model spec");
  ModelSpec s;
  try {
    s.kind = parse_model_kind(j.at("model_kind").get<std::string>());
    const json& d = j.at("dims");
    s.x_dim = d.at("x").get<std::size_t>();
    s.y_dim = d.at("y").get<std::size_t>();
    s.z_dim = d.at("z").get<std::size_t>();
    s.u_dim = d.at("u").get<std::size_t>();
    s.v_dim = d.at("v").get<std::size_t>();
    const json& h = j.at("hidden");
    s.hidden_width = h.at("width").get<std::size_t>();
    s.hidden_depth = h.at("depth").get<std::size_t>();
    s.activation = parse_activation(h.at("activation").get<std::string>());
    s.decoder_log_var = j.at("decoder_log_var").get<double>();
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed model spec: ") + e.what());
  } catch (const InvalidSpec& e) {
    throw ConfigInvalid(e.what());
  }
  return s;
}

TrainConfig train_config(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig t;
  t.weights = c.weights;
  t.schedule = c.schedule;
  t.adam = c.optimizer;
  t.seed = seed;
  t.eval.samples = c.importance_samples;
  t.eval.seed = Rng(seed).split("evaluation-seed").next_u64();
  t.eval_rows = c.eval_rows;
  return t;
}

}  // namespace wyner
