#pragma once

#include "depro/independence.hpp"
#include "depro/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace depro::reweight {

/// Global per-sample re-sampling weights over the feasible set
/// W = { w in R+^n : sum w_i = n }, held through an unconstrained
/// parametrization theta with w = n * softmax(theta). Both constraints hold
/// structurally, so no projection step is ever needed.
struct WeightTable {
  Vec theta;  // unconstrained, clamped to [-kThetaClamp, kThetaClamp]
  double lr = 1e-2;
  double lr_decay = 1e-3;
  std::uint64_t step_count = 0;

  int size() const { return static_cast<int>(theta.size()); }
};

inline constexpr double kThetaClamp = 30.0;

WeightTable make_table(int n, double lr = 1e-2, double lr_decay = 1e-3);

/// Realized weights for the whole table: n * softmax(theta). Always positive,
/// sums to n up to rounding.
Vec realize_all(const WeightTable& table);

/// Realized weights at the given sample indices (global normalization).
Vec realize(const WeightTable& table, const std::vector<int>& indices);

/// Gradient of the decorrelation objective with respect to the realized
/// weights of the batch (the network features are constants here).
Vec weight_grad(const Mat& reconstructed_batch, const Vec& weights, int multiplier);

/// One gradient step on theta restricted to batch_indices, minimizing the
/// batch decorrelation objective. The step size follows
/// lr / (1 + lr_decay * step_count). Returns the batch objective recomputed
/// with the updated weights.
double weight_step(WeightTable& table, const Mat& reconstructed_batch,
                   const std::vector<int>& batch_indices, int multiplier);

double effective_lr(const WeightTable& table);

void save_table(const WeightTable& table, const std::string& path);
WeightTable load_table(const std::string& path);

/// Histogram of realized weights as CSV rows "epoch,bin_lo,bin_hi,count".
void write_weight_histogram(std::ostream& out, int epoch, const Vec& realized, int bins = 20);

}  // namespace depro::reweight
