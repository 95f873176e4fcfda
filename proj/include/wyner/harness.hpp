// SPDX-License-Identifier: Apache-2.0
//
// Orchestration and persistence for multi-seed experiments.
//
// Output layout under `output_dir`:
//   config.json              canonical config echo
//   seed_<s>/metrics.csv     one row per evaluation event (schema below)
//   seed_<s>/timing.csv      epoch,stage,split,wall_seconds
//   seed_<s>/model.wynr      final checkpoint
//   seed_<s>/report.json     final and best-over-training metrics, status
//   summary.csv              trimmed statistics of the per-seed best values
//
// metrics.csv columns:
//   epoch,stage,split,total,rec_x,rec_y,reg_z,reg_u,reg_v,mi_term,extras,
//   mi_z,joint_nll,cond_nll_x2y,cond_nll_y2x
// Undefined metrics are empty fields. Wall-clock times live in timing.csv so
// that metrics.csv is byte-identical across reruns.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wyner/config.hpp"
#include "wyner/estimators.hpp"
#include "wyner/training.hpp"

namespace wyner {

/// Numeric MetricsRow fields in CSV column order.
const std::vector<std::string>& metric_fields();

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_timing_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
/// Parses metrics.csv; wall_seconds stays 0.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Value of a numeric field by name, or nullopt if absent for the row.
std::optional<double> metric_value(const MetricsRow& row, const std::string& field);

/// Best (lowest) nll values over every test row of a run.
struct BestMetrics {
  std::optional<double> joint_nll;
  std::optional<double> cond_nll_x2y;
  std::optional<double> cond_nll_y2x;
};

BestMetrics best_metrics(const std::vector<MetricsRow>& rows, const EvalReport* final_report);

struct SeedResult {
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  std::vector<MetricsRow> history;
  EvalReport final_report;
  BestMetrics best;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  bool all_completed() const;
};

/// Runs every seed (in parallel up to WYNER_LAB_THREADS workers) and writes
/// the output layout. A diverged seed is recorded as failed and the others
/// continue.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// One seed: generate, joint stage, marginal stages where applicable, final
/// evaluation. Writes seed_<s>/ when `write` is set.
SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed, bool write = true);

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and sample standard deviation after sorting and dropping `drop_k`
/// values from each end. Throws TooFewValues unless size > 2 drop_k.
Summary trimmed_summary(std::vector<double> values, std::size_t drop_k);

/// Outliers dropped per end for `n` seeds: floor(n / 5), at most 2.
std::size_t default_drop_k(std::size_t n);

/// Reads seed_*/metrics.csv under `metrics_dir` and writes long-format
/// `series,epoch,mean,std,n` files: plot_data.csv for joint-stage test rows
/// and plot_data_marginal_x.csv / plot_data_marginal_y.csv for the marginal
/// stages. Series are the numeric MetricsRow fields. Returns the number of
/// seeds read; throws NoMetricsFound if there are none.
std::size_t emit_plot_data(const std::string& metrics_dir);

}  // namespace wyner
