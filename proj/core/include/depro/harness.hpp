#pragma once

#include "depro/data.hpp"
#include "depro/model.hpp"
#include "depro/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace depro::harness {

/// One flat record per run; every key can be overridden from the CLI.
struct RunConfig {
  data::TaskSpec task;

  int d_emb = 16;
  int m_z = 16;
  int rff_multiplier = 4;

  double weight_lr = 5e-2;        // 1e-2 is the documented alternative preset
  double weight_lr_decay = 1e-3;
  int k_w = 5;                    // weight steps per mini-batch
  // The weight steps see the current batch plus a rolling buffer of recent
  // detached reconstructions; batch-sized estimates alone are too noisy for
  // the table to move past near-uniform weights.
  int weight_buffer = 256;

  double alpha = 1e-4;
  double purify_ratio = 0.7;
  bool use_decorrelation = true;
  bool use_purification = true;

  int epochs = 30;
  int batch_size = 32;
  double model_lr = 0.05;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "out";
  std::string data_dir;  // when set, CSV splits are loaded instead of generated

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct IterRecord {
  long iteration = 0;
  int epoch = 0;
  double ce = 0.0;
  double decorr_mean = 0.0;  // mean pairwise Frobenius norm on the batch
  double infonce = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double dev_acc = 0.0;
  double ood_acc = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<IterRecord> iters;
  std::vector<EpochRecord> epochs;
  double dev_acc = 0.0;
  double ood_acc = 0.0;
  bool failed = false;
  std::string error;
};

struct RunMetrics {
  std::vector<SeedRun> seeds;
  double mean_dev = 0.0;
  double stdev_dev = 0.0;
  double mean_ood = 0.0;
  double stdev_ood = 0.0;

  bool any_failed() const;
};

/// Argmax accuracy of the classifier head over a dataset. Deterministic.
double evaluate(const model::DeproModel& model, const data::Dataset& dataset);

/// Full multi-seed training run. Per batch: encode, reconstruct Z through the
/// RFF bank, k_w weight steps on the detached features, realize weights,
/// objective forward/backward, SGD step. Writes per-seed
/// metrics.jsonl / epochs.csv / weights.csv / selection.csv / pairs.csv plus
/// checkpoints under out_dir, and results.csv with per-seed finals and the
/// mean/stdev rows. A diverged seed is recorded as failed; remaining seeds
/// still run.
RunMetrics train(const RunConfig& config);

/// Loads the task splits for a config (CSV when data_dir is set, generated
/// otherwise).
data::TaskData load_task(const RunConfig& config);

/// One full train per (value, seed) along `axis` ("rff_multiplier" or
/// "purify_ratio"). Writes <out_dir>/sweep.csv with per-seed rows and one
/// mean row per value; per-run failures are recorded and the sweep continues.
struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;  // 0 in aggregate rows
  bool aggregate = false;
  double dev_acc = 0.0;
  double ood_acc = 0.0;
  bool failed = false;
};
std::vector<SweepRow> sweep(const RunConfig& config, const std::string& axis,
                            const std::vector<double>& values);

/// Fig.-4-style study: the configured run against a control with weight
/// updates disabled (weights frozen at uniform), measuring the same
/// objective. Writes <out_dir>/study.csv (arm,seed,epoch,decorr_mean) and
/// <out_dir>/pairs.csv (arm,seed,iteration,i,j,frob_sq).
struct StudyResult {
  RunMetrics depro;
  RunMetrics control;
  /// Epoch means of the per-iteration decorr metric, averaged over seeds.
  std::vector<double> depro_epoch_mean;
  std::vector<double> control_epoch_mean;
};
StudyResult decorr_study(const RunConfig& config);

}  // namespace depro::harness
