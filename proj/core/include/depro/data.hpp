#pragma once

#include "depro/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace depro::data {

/// Synthetic classification task with a controllable spurious feature.
/// Tokens are partitioned into per-class signal pools (placed in the signal
/// slots and jointly determining the label), one bias token per class (placed
/// in the bias slot, matching the label with the split's align probability),
/// and a shared noise pool for the remaining slots.
struct TaskSpec {
  int kslots = 8;
  int n_classes = 2;
  int vocab = 64;
  std::vector<int> signal_slots = {0, 1, 2};
  int bias_slot = 3;
  double align_train = 0.9;
  double align_ood = 0.5;
  double noise_flip = 0.1;
  int n_train = 2000;
  int n_dev = 200;
  int n_ood = 1000;
  std::uint64_t seed = 1;
};

/// How the token-id space is carved up for a spec.
struct VocabLayout {
  int n_classes = 0;
  int signal_per_class = 0;
  int noise_begin = 0;
  int vocab = 0;

  int bias_token(int cls) const { return cls; }
  int signal_begin(int cls) const { return n_classes + cls * signal_per_class; }
  int noise_count() const { return vocab - noise_begin; }
};

VocabLayout vocab_layout(const TaskSpec& spec);

/// Probability that a majority vote over `slots` independent readings, each
/// flipped with probability q, recovers the truth (ties split evenly).
double majority_accuracy(int slots, double q);

/// Per-slot corruption rate calibrated so that the majority vote over the
/// signal slots recovers the label with probability exactly 1 - noise_flip.
double slot_flip_rate(const TaskSpec& spec);

struct Dataset {
  IntMat tokens;                 // n x kslots
  std::vector<int> labels;       // n
  std::vector<int> sample_ids;   // n, globally unique across a task's splits

  int size() const { return static_cast<int>(tokens.rows()); }
  int kslots() const { return static_cast<int>(tokens.cols()); }
};

struct Batch {
  IntMat tokens;
  std::vector<int> labels;
  std::vector<int> sample_ids;

  int size() const { return static_cast<int>(tokens.rows()); }
  int kslots() const { return static_cast<int>(tokens.cols()); }
};

struct TaskData {
  TaskSpec spec;
  Dataset train;
  Dataset dev;   // in-distribution, drawn with align_train
  Dataset ood;   // drawn with align_ood
};

/// Deterministic for a fixed spec (including seed). Sample ids run
/// train, dev, ood back to back, so train ids double as weight-table indices.
TaskData generate(const TaskSpec& spec);

Batch slice(const Dataset& d, const std::vector<int>& rows);

struct CsvSchema {
  int kslots = 0;
  int n_classes = 0;
};

/// Reads "slot0,...,slot{k-1},label" CSV. Malformed rows are reported with
/// their line number; labels outside [0, n_classes) are rejected.
/// Loaded samples get fresh ids 0..n-1.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

void save_csv(const Dataset& d, const std::string& path);

}  // namespace depro::data
