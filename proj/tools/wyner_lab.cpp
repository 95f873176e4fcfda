// SPDX-License-Identifier: Apache-2.0
//
// wyner_lab: command-line front end.
//
//   wyner_lab gen-data --config c.json --out DIR
//   wyner_lab train    --config c.json [--seed N] [--out DIR]
//   wyner_lab eval     --config c.json --seed N [--checkpoint PATH]
//   wyner_lab sample   --config c.json --seed N --task joint|cond|cond-styled|joint-styled|recon
//   wyner_lab report   --out DIR
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <json.hpp>

#include "wyner/checkpoint.hpp"
#include "wyner/config.hpp"
#include "wyner/harness.hpp"
#include "wyner/mog.hpp"
#include "wyner/sampling.hpp"

namespace fs = std::filesystem;
using namespace wyner;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  if (g.seed) c.seeds = {*g.seed};
  if (!g.out.empty()) c.output_dir = g.out;
  validate(c);
  return c;
}

std::string default_checkpoint(const ExperimentConfig& c) {
  return (fs::path(c.output_dir) / ("seed_" + std::to_string(c.seeds.front())) / "model.wynr")
      .string();
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

Tensor row_of(const Tensor& m, std::size_t r) {
  Tensor out({1, m.cols()});
  std::copy_n(m.raw() + r * m.cols(), m.cols(), out.raw());
  return out;
}

std::size_t first_with_label(const PairSet& set, int label) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.labels[i] == label) return i;
  }
  throw LabelOutOfRange("no test pair carries label " + std::to_string(label));
}

int cmd_gen_data(const Globals& g) {
  ExperimentConfig c = resolve(g);
  if (g.seed) c.dataset.seed = *g.seed;
  const PairDataset data = generate(c.dataset);
  fs::create_directories(c.output_dir);
  for (const auto& [name, set] : {std::pair{"train.csv", &data.train}, {"test.csv", &data.test}}) {
    std::ofstream out(fs::path(c.output_dir) / name);
    write_csv(out, *set);
  }
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
            << " test pairs to " << c.output_dir << "\n";
  return 0;
}

int cmd_train(const Globals& g) {
  const ExperimentConfig c = resolve(g);
  const ExperimentResult r = run_experiment(c);
  for (const SeedResult& s : r.seeds) {
    std::cout << "seed " << s.seed << ": " << (s.completed ? "completed" : "FAILED");
    if (s.best.joint_nll) std::cout << " best_joint_nll=" << *s.best.joint_nll;
    if (s.best.cond_nll_x2y) std::cout << " best_cond_nll_x2y=" << *s.best.cond_nll_x2y;
    if (s.best.cond_nll_y2x) std::cout << " best_cond_nll_y2x=" << *s.best.cond_nll_y2x;
    if (!s.error.empty()) std::cout << " error=\"" << s.error << "\"";
    std::cout << "\n";
  }
  return r.all_completed() ? 0 : 1;
}

int cmd_eval(const Globals& g, const std::string& checkpoint) {
  const ExperimentConfig c = resolve(g);
  const Checkpoint ck = load_checkpoint(checkpoint.empty() ? default_checkpoint(c) : checkpoint);
  const PairDataset data = generate(c.dataset);
  const TrainConfig tc = train_config(c, c.seeds.front());
  const EvalReport r = evaluate(ck.model, data.test.x, data.test.y, tc.eval);
  const nlohmann::json j{{"joint_nll", opt(r.joint_nll)},       {"cond_nll_x2y", opt(r.cond_nll_x2y)},
                         {"cond_nll_y2x", opt(r.cond_nll_y2x)}, {"mi_z", opt(r.mi_z)},
                         {"n_importance", r.n_importance},      {"n_eval", r.n_eval}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SampleArgs {
  std::string task = "joint";
  std::string checkpoint;
  std::size_t n = 1000;
  int label = 2;
  int style_label = 3;
  std::string recon_from = "pair";
  std::string file;
};

int cmd_sample(const Globals& g, const SampleArgs& a) {
  const ExperimentConfig c = resolve(g);
  const Checkpoint ck = load_checkpoint(a.checkpoint.empty() ? default_checkpoint(c) : a.checkpoint);
  const Model& m = ck.model;
  const ModelSpec& s = m.spec;
  const PairDataset data = generate(c.dataset);
  const PairSet& test = data.test;
  Rng rng = Rng(c.seeds.front()).split("sampling").split(a.task);

  const fs::path path = a.file.empty() ? fs::path(c.output_dir) / ("samples_" + a.task + ".csv")
                                       : fs::path(a.file);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  write_samples_header(out, s.x_dim, s.y_dim);

  const std::size_t ref_idx = first_with_label(test, a.label);
  const Reference ref{row_of(test.x, ref_idx), row_of(test.y, ref_idx)};
  if (a.task == "joint") {
    const SamplePairs p = sample_joint(m, a.n, draw_noise(s, a.n, rng));
    write_samples(out, a.task, 0, &p.x, &p.y, s.x_dim, s.y_dim);
  } else if (a.task == "cond") {
    const Tensor y = sample_conditional(m, *ref.x, Direction::kXToY, a.n, draw_noise(s, a.n, rng));
    write_samples(out, a.task, a.label, nullptr, &y, s.x_dim, s.y_dim);
  } else if (a.task == "cond-styled") {
    const std::size_t style_idx = first_with_label(test, a.style_label);
    const StyleCode style = extract_style(m, Reference{std::nullopt, row_of(test.y, style_idx)},
                                          Side::kY, draw_noise(s, 1, rng));
    for (int k = 1; k <= kMogLabels; ++k) {
      const Tensor x = row_of(test.x, first_with_label(test, k));
      for (std::size_t i = 0; i < a.n; ++i) {
        const Tensor y = sample_conditional_styled(m, x, Direction::kXToY, style, draw_noise(s, 1, rng));
        write_samples(out, a.task, k, nullptr, &y, s.x_dim, s.y_dim);
      }
    }
  } else if (a.task == "joint-styled") {
    const StyleCode sx = extract_style(m, ref, Side::kX, draw_noise(s, 1, rng));
    const StyleCode sy = extract_style(m, ref, Side::kY, draw_noise(s, 1, rng));
    const SamplePairs p = sample_joint_styled(m, sx, sy, a.n, draw_noise(s, a.n, rng));
    write_samples(out, a.task, a.label, &p.x, &p.y, s.x_dim, s.y_dim);
  } else if (a.task == "recon") {
    const ReconInference inf = a.recon_from == "x"   ? ReconInference::kX
                               : a.recon_from == "y" ? ReconInference::kY
                                                     : ReconInference::kPair;
    const SamplePairs p = joint_stochastic_reconstruction(m, ref, a.n, inf, draw_noise(s, a.n, rng));
    write_samples(out, a.task, a.label, &p.x, &p.y, s.x_dim, s.y_dim);
  }
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_report(const Globals& g) {
  const std::string dir = g.out.empty() ? resolve(g).output_dir : g.out;
  const std::size_t seeds = emit_plot_data(dir);
  std::cout << "aggregated " << seeds << " seed(s) into " << dir << "/plot_data*.csv\n";
  std::ifstream summary(fs::path(dir) / "summary.csv");
  if (summary) std::cout << summary.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wyner common-representation VAE lab"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Run a single seed");
  app.add_option("--out", g.out, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Write the train/test pairs as CSV");
  auto* train = app.add_subcommand("train", "Train every configured seed");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  auto* sample = app.add_subcommand("sample", "Draw samples from a trained Wyner model");
  auto* report = app.add_subcommand("report", "Aggregate per-seed metrics into plot data");
  for (CLI::App* sub : {gen, train, eval, sample, report}) sub->fallthrough();

  std::string eval_checkpoint;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path");

  SampleArgs sa;
  sample->add_option("--task", sa.task, "Sampling task")
      ->check(CLI::IsMember({"joint", "cond", "cond-styled", "joint-styled", "recon"}));
  sample->add_option("--checkpoint", sa.checkpoint, "Checkpoint path");
  sample->add_option("-n,--count", sa.n, "Samples to draw");
  sample->add_option("--label", sa.label, "Label of the reference test pair")->check(CLI::Range(1, 5));
  sample->add_option("--style-label", sa.style_label, "Label of the style reference")
      ->check(CLI::Range(1, 5));
  sample->add_option("--recon-from", sa.recon_from, "Inference for recon")
      ->check(CLI::IsMember({"pair", "x", "y"}));
  sample->add_option("--file", sa.file, "Output CSV path");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g);
    if (*eval) return cmd_eval(g, eval_checkpoint);
    if (*sample) return cmd_sample(g, sa);
    if (*report) return cmd_report(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
