// SPDX-License-Identifier: Apache-2.0
#include "wyner/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "wyner/checkpoint.hpp"

namespace wyner {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("malformed number '" + std::string(s) + "' in metrics file");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::kJoint, Stage::kMarginalX, Stage::kMarginalY}) {
    if (to_string(st) == s) return st;
  }
  throw Error("unknown stage '" + s + "' in metrics file");
}

std::optional<double>* optional_slot(MetricsRow& row, const std::string& field) {
  if (field == "mi_z") return &row.mi_z;
  if (field == "joint_nll") return &row.joint_nll;
  if (field == "cond_nll_x2y") return &row.cond_nll_x2y;
  if (field == "cond_nll_y2x") return &row.cond_nll_y2x;
  return nullptr;
}

double* loss_slot(LossBreakdown& l, const std::string& field) {
  if (field == "total") return &l.total;
  if (field == "rec_x") return &l.rec_x;
  if (field == "rec_y") return &l.rec_y;
  if (field == "reg_z") return &l.reg_z;
  if (field == "reg_u") return &l.reg_u;
  if (field == "reg_v") return &l.reg_v;
  if (field == "mi_term") return &l.mi_term;
  if (field == "extras") return &l.extras;
  return nullptr;
}

void min_into(std::optional<double>& best, const std::optional<double>& v) {
  if (v && (!best || *v < *best)) best = v;
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("WYNER_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

PairSet head(const PairSet& set, std::size_t rows) {
  if (rows == 0 || rows >= set.size()) return set;
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  return set.gather(idx);
}

void write_seed(const ExperimentConfig& config, const SeedResult& r, const Model* model) {
  const fs::path dir = fs::path(config.output_dir) / ("seed_" + std::to_string(r.seed));
  fs::create_directories(dir);
  std::ostringstream metrics, timing;
  write_metrics_csv(metrics, r.history);
  write_timing_csv(timing, r.history);
  write_text(dir / "metrics.csv", metrics.str());
  write_text(dir / "timing.csv", timing.str());
  if (model) save_checkpoint(*model, to_json(config), (dir / "model.wynr").string());
  nlohmann::json report{
      {"seed", r.seed},
      {"status", r.completed ? "completed" : "failed"},
      {"error", r.error},
      {"final", {{"joint_nll", opt_json(r.final_report.joint_nll)},
                 {"cond_nll_x2y", opt_json(r.final_report.cond_nll_x2y)},
                 {"cond_nll_y2x", opt_json(r.final_report.cond_nll_y2x)},
                 {"mi_z", opt_json(r.final_report.mi_z)},
                 {"n_importance", r.final_report.n_importance},
                 {"n_eval", r.final_report.n_eval}}},
      {"best", {{"joint_nll", opt_json(r.best.joint_nll)},
                {"cond_nll_x2y", opt_json(r.best.cond_nll_x2y)},
                {"cond_nll_y2x", opt_json(r.best.cond_nll_y2x)}}},
  };
  write_text(dir / "report.json", report.dump(2) + "\n");
}

void write_summary(const ExperimentConfig& config, const ExperimentResult& result) {
  std::ostringstream out;
  out << "metric,mean,std,n,drop_k\n";
  auto emit = [&](const std::string& name, auto getter) {
    std::vector<double> values;
    for (const SeedResult& s : result.seeds) {
      if (!s.completed) continue;
      const std::optional<double> v = getter(s);
      if (v) values.push_back(*v);
    }
    if (values.empty()) return;
    const std::size_t k = default_drop_k(values.size());
    const Summary sm = trimmed_summary(values, k);
    out << name << ',' << fmt(sm.mean) << ',' << fmt(sm.std) << ',' << sm.n << ',' << k << '\n';
  };
  emit("best_joint_nll", [](const SeedResult& s) { return s.best.joint_nll; });
  emit("best_cond_nll_x2y", [](const SeedResult& s) { return s.best.cond_nll_x2y; });
  emit("best_cond_nll_y2x", [](const SeedResult& s) { return s.best.cond_nll_y2x; });
  emit("final_mi_z", [](const SeedResult& s) { return s.final_report.mi_z; });
  write_text(fs::path(config.output_dir) / "summary.csv", out.str());
}

}  // namespace

const std::vector<std::string>& metric_fields() {
  static const std::vector<std::string> fields{
      "total", "rec_x",   "rec_y", "reg_z",     "reg_u",        "reg_v",
      "mi_term", "extras", "mi_z", "joint_nll", "cond_nll_x2y", "cond_nll_y2x"};
  return fields;
}

std::optional<double> metric_value(const MetricsRow& row, const std::string& field) {
  MetricsRow r = row;
  if (double* d = loss_slot(r.loss, field)) return *d;
  if (std::optional<double>* o = optional_slot(r, field)) return *o;
  if (field == "wall_seconds") return row.wall_seconds;
  throw Error("unknown metric field '" + field + "'");
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "epoch,stage,split";
  for (const std::string& f : metric_fields()) out << ',' << f;
  out << '\n';
  for (const MetricsRow& r : rows) {
    out << r.epoch << ',' << to_string(r.stage) << ',' << r.split;
    for (const std::string& f : metric_fields()) out << ',' << fmt(metric_value(r, f));
    out << '\n';
  }
}

void write_timing_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "epoch,stage,split,wall_seconds\n";
  for (const MetricsRow& r : rows) {
    out << r.epoch << ',' << to_string(r.stage) << ',' << r.split << ',' << fmt(r.wall_seconds)
        << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("metrics file is empty");
  const std::vector<std::string> header = split_csv(line);
  if (header.size() != 3 + metric_fields().size() || header[0] != "epoch") {
    throw Error("unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) throw Error("metrics row has the wrong number of fields");
    MetricsRow r;
    r.epoch = static_cast<std::size_t>(parse_double(cells[0]));
    r.stage = parse_stage(cells[1]);
    r.split = cells[2];
    for (std::size_t i = 3; i < cells.size(); ++i) {
      const std::string& field = header[i];
      if (cells[i].empty()) continue;
      const double v = parse_double(cells[i]);
      if (double* d = loss_slot(r.loss, field)) {
        *d = v;
      } else if (std::optional<double>* o = optional_slot(r, field)) {
        *o = v;
      } else {
        throw Error("unknown metrics column '" + field + "'");
      }
    }
    rows.push_back(r);
  }
  return rows;
}

BestMetrics best_metrics(const std::vector<MetricsRow>& rows, const EvalReport* final_report) {
  BestMetrics b;
  for (const MetricsRow& r : rows) {
    if (r.split != "test") continue;
    min_into(b.joint_nll, r.joint_nll);
    min_into(b.cond_nll_x2y, r.cond_nll_x2y);
    min_into(b.cond_nll_y2x, r.cond_nll_y2x);
  }
  if (final_report) {
    min_into(b.joint_nll, final_report->joint_nll);
    min_into(b.cond_nll_x2y, final_report->cond_nll_x2y);
    min_into(b.cond_nll_y2x, final_report->cond_nll_y2x);
  }
  return b;
}

bool ExperimentResult::all_completed() const {
  return std::all_of(seeds.begin(), seeds.end(), [](const SeedResult& s) { return s.completed; });
}

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed, bool write) {
  validate(config);
  SeedResult r;
  r.seed = seed;
  const PairDataset data = generate(config.dataset);
  Model model = init_model(config.model, seed);
  const TrainConfig tc = train_config(config, seed);
  try {
    r.history = train_joint(model, data, tc);
    const ModelKind kind = model.spec.kind;
    if (kind == ModelKind::kWyner || kind == ModelKind::kJvae) {
      std::vector<MetricsRow> more = train_marginals(model, data, tc);
      r.history.insert(r.history.end(), more.begin(), more.end());
    }
    const PairSet test = head(data.test, config.eval_rows);
    r.final_report = evaluate(model, test.x, test.y, tc.eval);
    r.best = best_metrics(r.history, &r.final_report);
    r.completed = true;
  } catch (const DivergenceDetected& e) {
    r.error = e.what();
  } catch (const NonFiniteWeight& e) {
    r.error = e.what();
  }
  if (write) write_seed(config, r, &model);
  return r;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  fs::create_directories(config.output_dir);
  write_text(fs::path(config.output_dir) / "config.json", to_json(config) + "\n");
  ExperimentResult result;
  result.seeds.resize(config.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string fatal;
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      try {
        result.seeds[i] = run_seed(config, config.seeds[i], true);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        result.seeds[i].seed = config.seeds[i];
        result.seeds[i].error = e.what();
        if (fatal.empty()) fatal = e.what();
      }
    }
  };
  const std::size_t workers = worker_count(config.seeds.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  write_summary(config, result);
  return result;
}

std::size_t default_drop_k(std::size_t n) { return std::min<std::size_t>(2, n / 5); }

Summary trimmed_summary(std::vector<double> values, std::size_t drop_k) {
  if (values.size() <= 2 * drop_k) {
    throw TooFewValues("need more than " + std::to_string(2 * drop_k) + " values, got " +
                       std::to_string(values.size()));
  }
  std::sort(values.begin(), values.end());
  const auto first = values.begin() + static_cast<std::ptrdiff_t>(drop_k);
  const auto last = values.end() - static_cast<std::ptrdiff_t>(drop_k);
  Summary s;
  s.n = static_cast<std::size_t>(last - first);
  double sum = 0.0;
  for (auto it = first; it != last; ++it) sum += *it;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (auto it = first; it != last; ++it) ss += (*it - s.mean) * (*it - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::size_t emit_plot_data(const std::string& metrics_dir) {
  std::vector<fs::path> dirs;
  if (fs::is_directory(metrics_dir)) {
    for (const auto& entry : fs::directory_iterator(metrics_dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_directory() && name.rfind("seed_", 0) == 0 &&
          fs::exists(entry.path() / "metrics.csv")) {
        dirs.push_back(entry.path());
      }
    }
  }
  if (dirs.empty()) throw NoMetricsFound("no seed_*/metrics.csv under " + metrics_dir);
  std::sort(dirs.begin(), dirs.end());

  std::vector<std::string> series = metric_fields();
  series.push_back("wall_seconds");
  // stage -> field -> epoch -> per-seed values
  std::map<Stage, std::map<std::string, std::map<std::size_t, std::vector<double>>>> table;
  for (const fs::path& dir : dirs) {
    std::ifstream in(dir / "metrics.csv");
    std::vector<MetricsRow> rows = read_metrics_csv(in);
    std::ifstream timing(dir / "timing.csv");
    std::string line;
    if (timing && std::getline(timing, line)) {
      for (MetricsRow& r : rows) {
        if (!std::getline(timing, line)) break;
        const std::vector<std::string> cells = split_csv(line);
        if (cells.size() == 4) r.wall_seconds = parse_double(cells[3]);
      }
    }
    for (const MetricsRow& r : rows) {
      if (r.split != "test") continue;
      for (const std::string& f : series) {
        if (const std::optional<double> v = metric_value(r, f)) {
          table[r.stage][f][r.epoch].push_back(*v);
        }
      }
    }
  }
  const std::map<Stage, std::string> files{{Stage::kJoint, "plot_data.csv"},
                                           {Stage::kMarginalX, "plot_data_marginal_x.csv"},
                                           {Stage::kMarginalY, "plot_data_marginal_y.csv"}};
  for (const auto& [stage, file] : files) {
    std::ostringstream out;
    out << "series,epoch,mean,std,n\n";
    auto st = table.find(stage);
    if (st != table.end()) {
      for (const std::string& f : series) {
        auto by_epoch = st->second.find(f);
        if (by_epoch == st->second.end()) continue;
        for (const auto& [epoch, values] : by_epoch->second) {
          const Summary s = trimmed_summary(values, default_drop_k(values.size()));
          out << f << ',' << epoch << ',' << fmt(s.mean) << ',' << fmt(s.std) << ',' << s.n << '\n';
        }
      }
    }
    if (stage == Stage::kJoint || st != table.end()) {
      write_text(fs::path(metrics_dir) / file, out.str());
    }
  }
  return dirs.size();
}

}  // namespace wyner
