// SPDX-License-Identifier: Apache-2.0
#include "wyner/models.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "wyner/rng.hpp"

namespace wyner {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
MatMap view(Tensor& t) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

struct NetShape {
  std::string name;
  std::size_t in;
  std::size_t out;
  bool decoder;
};

std::vector<NetShape> net_shapes(const ModelSpec& s) {
  const std::size_t x = s.x_dim, y = s.y_dim, z = s.z_dim, u = s.u_dim, v = s.v_dim;
  switch (s.kind) {
    case ModelKind::kWyner:
      return {{"enc_joint", x + y, z, false}, {"enc_u", z + x, u, false},
              {"enc_v", z + y, v, false},     {"enc_zx", x, z, false},
              {"enc_zy", y, z, false},        {"dec_x", z + u, x, true},
              {"dec_y", z + v, y, true}};
    case ModelKind::kJvae:
    case ModelKind::kJmvae: {
      const std::size_t w = s.w_dim();
      return {{"enc_joint", x + y, w, false}, {"enc_wx", x, w, false}, {"enc_wy", y, w, false},
              {"dec_x", w, x, true},          {"dec_y", w, y, true}};
    }
    case ModelKind::kCvae:
      return {{"enc_v", y + x, v, false}, {"prior_v", x, v, false}, {"dec_y", v + x, y, true}};
    case ModelKind::kVccaPrivate:
      return {{"enc_zx", x, z, false}, {"enc_zy", y, z, false}, {"enc_u", x, u, false},
              {"enc_v", y, v, false},  {"dec_x", z + u, x, true}, {"dec_y", z + v, y, true}};
    case ModelKind::kVib:
      return {{"enc_zx", x, z, false}, {"dec_y", z, y, true}};
  }
  throw InvalidSpec("unknown model kind");
}

std::vector<std::pair<std::string, std::size_t>> prior_shapes(const ModelSpec& s) {
  switch (s.kind) {
    case ModelKind::kWyner:
    case ModelKind::kVccaPrivate:
      return {{"z", s.z_dim}, {"u", s.u_dim}, {"v", s.v_dim}};
    case ModelKind::kJvae:
    case ModelKind::kJmvae:
      return {{"w", s.w_dim()}};
    case ModelKind::kCvae:
      return {};
    case ModelKind::kVib:
      return {{"z", s.z_dim}};
  }
  return {};
}

Linear init_linear(std::size_t in, std::size_t out, Rng rng) {
  Linear l{Tensor({in, out}), Tensor({out})};
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  for (std::size_t i = 0; i < l.weight.size(); ++i) {
    l.weight[i] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return l;
}

void apply_activation(Tensor& t, Activation act) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= 0.0) t[i] = act == Activation::kRelu ? 0.0 : 0.2 * t[i];
  }
}

Tensor affine(const Tensor& input, const Linear& l) {
  Tensor out({input.rows(), l.weight.cols()});
  MatMap o = view(out);
  o.noalias() = view(input) * view(l.weight);
  o.rowwise() += view(l.bias).row(0);
  return out;
}

std::string param_name(const std::string& net, const std::string& layer, char part) {
  return net + "." + layer + "." + part;
}

template <typename NetMap, typename PriorMap, typename Out, typename Make>
void collect(NetMap& nets, PriorMap& priors, Out& out, Make make) {
  for (auto& [name, net] : nets) {
    for (std::size_t i = 0; i < net.hidden.size(); ++i) {
      const std::string layer = "h" + std::to_string(i);
      out.push_back(make(param_name(name, layer, 'w'), &net.hidden[i].weight));
      out.push_back(make(param_name(name, layer, 'b'), &net.hidden[i].bias));
    }
    out.push_back(make(param_name(name, "mean", 'w'), &net.mean_head.weight));
    out.push_back(make(param_name(name, "mean", 'b'), &net.mean_head.bias));
    if (net.log_var_head) {
      out.push_back(make(param_name(name, "logvar", 'w'), &net.log_var_head->weight));
      out.push_back(make(param_name(name, "logvar", 'b'), &net.log_var_head->bias));
    }
  }
  for (auto& [name, lv] : priors) out.push_back(make("prior." + name, &lv));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kWyner: return "wyner";
    case ModelKind::kJvae: return "jvae";
    case ModelKind::kJmvae: return "jmvae";
    case ModelKind::kCvae: return "cvae";
    case ModelKind::kVccaPrivate: return "vcca_private";
    case ModelKind::kVib: return "vib";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  for (ModelKind k : {ModelKind::kWyner, ModelKind::kJvae, ModelKind::kJmvae, ModelKind::kCvae,
                      ModelKind::kVccaPrivate, ModelKind::kVib}) {
    if (to_string(k) == text) return k;
  }
  throw InvalidSpec("unknown model kind '" + std::string(text) + "'");
}

std::size_t GaussianHeadNet::in_dim() const {
  return hidden.empty() ? mean_head.weight.rows() : hidden.front().weight.rows();
}

const GaussianHeadNet& Model::net(std::string_view name) const {
  auto it = nets.find(std::string(name));
  if (it == nets.end()) {
    throw NotApplicable(std::string(to_string(spec.kind)) + " model has no network '" +
                        std::string(name) + "'");
  }
  return it->second;
}

const Tensor& Model::prior(std::string_view name) const {
  auto it = prior_log_var.find(std::string(name));
  if (it == prior_log_var.end()) {
    throw NotApplicable(std::string(to_string(spec.kind)) + " model has no prior '" +
                        std::string(name) + "'");
  }
  return it->second;
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  collect(nets, prior_log_var, out, [](std::string n, Tensor* t) { return NamedParam{n, t}; });
  return out;
}

std::vector<NamedConstParam> Model::parameters() const {
  std::vector<NamedConstParam> out;
  collect(nets, prior_log_var, out,
          [](std::string n, const Tensor* t) { return NamedConstParam{n, t}; });
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor->size();
  return total;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.x_dim == 0 || spec.y_dim == 0 || spec.z_dim == 0 || spec.v_dim == 0 ||
      spec.hidden_width == 0) {
    throw InvalidSpec("layer widths and latent dimensions must be positive");
  }
  if (spec.u_dim == 0 && spec.kind != ModelKind::kCvae && spec.kind != ModelKind::kVib) {
    throw InvalidSpec("u dimension must be positive");
  }
  Model m;
  m.spec = spec;
  const Rng root = Rng(seed).split("model-init");
  for (const NetShape& shape : net_shapes(spec)) {
    GaussianHeadNet net;
    net.activation = spec.activation;
    std::size_t in = shape.in;
    for (std::size_t i = 0; i < spec.hidden_depth; ++i) {
      net.hidden.push_back(init_linear(
          in, spec.hidden_width, root.split(param_name(shape.name, "h" + std::to_string(i), 'w'))));
      in = spec.hidden_width;
    }
    net.mean_head = init_linear(in, shape.out, root.split(param_name(shape.name, "mean", 'w')));
    if (shape.decoder) {
      net.fixed_log_var = spec.decoder_log_var;
    } else {
      net.log_var_head =
          init_linear(in, shape.out, root.split(param_name(shape.name, "logvar", 'w')));
    }
    m.nets.emplace(shape.name, std::move(net));
  }
  for (const auto& [name, dim] : prior_shapes(spec)) m.prior_log_var.emplace(name, Tensor({dim}));

  switch (spec.kind) {
    case ModelKind::kJmvae:
    case ModelKind::kVccaPrivate:
      m.marginal_x_ready = m.marginal_y_ready = true;
      break;
    case ModelKind::kCvae:
    case ModelKind::kVib:
      m.marginal_x_ready = true;
      break;
    default:
      break;
  }
  return m;
}

// ---- binder / differentiable forward ------------------------------------

ParamBinder::ParamBinder(Tape& tape, Predicate trainable)
    : tape_(tape), trainable_(std::move(trainable)) {}

bool ParamBinder::is_trainable(std::string_view name) const {
  if (trainable_ && !trainable_(name)) return false;
  for (const Predicate& p : restrictions_) {
    if (!p(name)) return false;
  }
  return true;
}

void ParamBinder::restrict(Predicate allowed) {
  for (const auto& [name, var] : bound_) {
    if (is_trainable(name) && !allowed(name)) {
      throw FrozenParamTouched("parameter " + name +
                               " was bound as trainable before being frozen");
    }
  }
  restrictions_.push_back(std::move(allowed));
}

Var ParamBinder::bind(const std::string& name, const Tensor& tensor) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Var v = tape_.leaf(tensor, is_trainable(name));
  cache_.emplace(name, v);
  bound_.emplace_back(name, v);
  return v;
}

GaussianVar infer(ParamBinder& binder, const Model& model, const std::string& name, Var input) {
  const GaussianHeadNet& net = model.net(name);
  if (input.value().cols() != net.in_dim()) {
    throw DimensionMismatch("network " + name + " expects " + std::to_string(net.in_dim()) +
                            " input features, got " + std::to_string(input.value().cols()));
  }
  auto layer = [&](Var in, const Linear& l, const std::string& tag) {
    Var w = binder.bind(param_name(name, tag, 'w'), l.weight);
    Var b = binder.bind(param_name(name, tag, 'b'), l.bias);
    return add(matmul(in, w), b);
  };
  Var h = input;
  for (std::size_t i = 0; i < net.hidden.size(); ++i) {
    h = layer(h, net.hidden[i], "h" + std::to_string(i));
    h = net.activation == Activation::kRelu ? relu(h) : leaky_relu(h, 0.2);
  }
  Var mean = layer(h, net.mean_head, "mean");
  Var log_var;
  if (net.log_var_head) {
    log_var = clamp(layer(h, *net.log_var_head, "logvar"), kLogVarMin, kLogVarMax);
  } else {
    log_var = binder.tape().constant(Tensor({net.out_dim()}, net.fixed_log_var));
  }
  return GaussianVar{mean, log_var};
}

Var prior_log_var(ParamBinder& binder, const Model& model, const std::string& name) {
  Var lv = binder.bind("prior." + name, model.prior(name));
  return clamp(lv, kLogVarMin, kLogVarMax);
}

GaussianVar prior(ParamBinder& binder, const Model& model, const std::string& name,
                  std::size_t rows) {
  Var lv = prior_log_var(binder, model, name);
  Var mean = binder.tape().constant(Tensor({rows, lv.value().cols()}));
  return GaussianVar{mean, lv};
}

// ---- plain evaluation ----------------------------------------------------

GaussianBatch infer(const GaussianHeadNet& net, const Tensor& input) {
  if (input.cols() != net.in_dim()) {
    throw DimensionMismatch("network expects " + std::to_string(net.in_dim()) +
                            " input features, got " + std::to_string(input.cols()));
  }
  Tensor h = input;
  for (const Linear& l : net.hidden) {
    h = affine(h, l);
    apply_activation(h, net.activation);
  }
  GaussianBatch out;
  out.mean = affine(h, net.mean_head);
  if (net.log_var_head) {
    out.log_var = affine(h, *net.log_var_head);
    for (std::size_t i = 0; i < out.log_var.size(); ++i) {
      out.log_var[i] = std::clamp(out.log_var[i], kLogVarMin, kLogVarMax);
    }
  } else {
    out.log_var = Tensor({input.rows(), net.out_dim()}, net.fixed_log_var);
  }
  if (!out.mean.all_finite() || !out.log_var.all_finite()) {
    throw NonFiniteValue("network evaluation produced a non-finite value");
  }
  return out;
}

GaussianBatch decode_mean(const GaussianHeadNet& dec, const Tensor& common, const Tensor& local) {
  if (common.cols() + local.cols() != dec.in_dim()) {
    throw DimensionMismatch("decoder expects " + std::to_string(dec.in_dim()) +
                            " input features, got " +
                            std::to_string(common.cols() + local.cols()));
  }
  if (local.size() == 0) return infer(dec, common);
  return infer(dec, concat_cols({&common, &local}));
}

Tensor concat_cols(std::initializer_list<const Tensor*> parts) {
  const std::size_t rows = (*parts.begin())->rows();
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) throw ShapeMismatch("concat_cols: row count mismatch");
    total += p->cols();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    const std::size_t w = p->cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p->raw() + r * w, w, out.raw() + r * total + offset);
    }
    offset += w;
  }
  return out;
}

}  // namespace wyner
