#pragma once

#include "depro/types.hpp"

#include <iosfwd>
#include <vector>

namespace depro::indep {

/// Empirical cross-covariance matrix between two reconstructed feature blocks.
/// pair (i, j) identifies the block pair when produced by decorr_objective;
/// standalone estimates leave it at (-1, -1).
struct CrossCov {
  Mat matrix;
  int i = -1;
  int j = -1;
};

struct PairTerm {
  int i = 0;
  int j = 0;
  double frob_sq = 0.0;
};

/// Sum over unordered block pairs of squared Frobenius norms, with the
/// per-pair breakdown kept for the decorrelation study.
struct DecorrObjective {
  double total = 0.0;
  std::vector<PairTerm> per_pair;  // ascending (i, j), i < j
};

/// Unbiased estimate 1/(n-1) * sum_i (u_i - mean_u)^T (v_i - mean_v).
/// Requires n >= 2 and equal row counts.
CrossCov cross_cov(const Mat& u_block, const Mat& v_block);

/// Weighted estimate with the weights multiplying the feature vectors inside
/// both the deviations and the means:
///   1/(n-1) * sum_i (w_i u_i - (1/n) sum_j w_j u_j)^T (w_i v_i - (1/n) sum_j w_j v_j).
/// Unit weights reduce it to cross_cov. Weights must be nonnegative.
CrossCov weighted_cross_cov(const Mat& u_block, const Mat& v_block, const Vec& weights);

/// Deviation matrix of the weighted estimator: row i is w_i x_i - (1/n) sum_j w_j x_j.
/// weighted_cross_cov of two blocks is D_u^T D_v / (n-1).
Mat weighted_centered(const Mat& block, const Vec& weights);

/// Sum of squared entries.
double frob_sq(const CrossCov& c);

/// Evaluates weighted_cross_cov for every unordered block pair (i < j) of a
/// reconstructed matrix whose columns are grouped into blocks of `multiplier`
/// columns, and sums the squared Frobenius norms.
DecorrObjective decorr_objective(const Mat& reconstructed, const Vec& weights, int multiplier);

/// Analytic gradient of decorr_objective(...).total with respect to each weight.
Vec weight_grad(const Mat& reconstructed, const Vec& weights, int multiplier);

/// Distributional variant: the weights re-weight the empirical measure (each
/// sample enters the product once with mass w_i / n):
///   1/(n-1) * sum_i w_i (u_i - mean_w(u))^T (v_i - mean_w(v)),
/// mean_w(x) = (1/n) sum_j w_j x_j. This is the estimator whose population
/// value vanishes when the re-weighted joint factorizes, so it is the form
/// the weight optimizer descends; the printed-form estimator above is kept
/// as the measurement contract.
CrossCov importance_cross_cov(const Mat& u_block, const Mat& v_block, const Vec& weights);

DecorrObjective importance_decorr_objective(const Mat& reconstructed, const Vec& weights,
                                            int multiplier);

/// Analytic gradient of importance_decorr_objective(...).total w.r.t. weights.
Vec importance_weight_grad(const Mat& reconstructed, const Vec& weights, int multiplier);

/// Mean over pairs of the (non-squared) Frobenius norms; 0 when no pairs exist.
/// This is the per-iteration quantity recorded by the decorrelation study.
double mean_pair_norm(const DecorrObjective& obj);

/// Appends rows "iteration,i,j,frob_sq" (no header).
void write_pair_rows(std::ostream& out, long iteration, const DecorrObjective& obj);

}  // namespace depro::indep
