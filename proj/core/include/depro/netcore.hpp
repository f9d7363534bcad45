#pragma once

#include "depro/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace depro::net {

using NodeId = int;

/// Reverse-mode tape over dense double matrices. Forward calls append nodes;
/// backward(root) seeds d(root)/d(root) = 1 and accumulates exact gradients
/// into every node recorded up to the root. Nodes may keep being appended
/// after a backward pass (backward resets all gradients first), which is how
/// the saliency pass and the final loss pass share one forward graph.
/// Second-order gradients (backward through backward) are not supported.
class Tape {
 public:
  /// Leaf holding a copy of `v`. All leaves receive gradients; `value` and
  /// `grad` stay addressable for the lifetime of the tape.
  NodeId input(const Mat& v);

  /// Rows of `table` selected by `rows` (embedding lookup). Duplicate row ids
  /// accumulate their gradients into the same table row.
  NodeId gather_rows(NodeId table, const std::vector<int>& rows);

  NodeId matmul(NodeId a, NodeId b);
  /// a * b^T without materializing a transpose node.
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  /// Adds a 1 x c row vector to every row of an n x c matrix.
  NodeId add_rowvec(NodeId a, NodeId row);
  NodeId scale(NodeId a, double s);
  NodeId tanh(NodeId a);
  /// Elementwise mean of same-shaped nodes.
  NodeId mean_of(const std::vector<NodeId>& xs);
  /// Horizontal concatenation of nodes with equal row counts.
  NodeId concat_cols(const std::vector<NodeId>& xs);
  /// Sum of squared entries, as a 1x1 node.
  NodeId square_sum(NodeId a);
  /// sum(a .* coeff) over all entries, as a 1x1 node. coeff is a constant.
  NodeId weighted_sum(NodeId a, const Mat& coeff);

  /// (1/n) * sum_i w_i * (logsumexp(logits_i) - logits_i[label_i]).
  /// Numerically stable via max subtraction. Labels must lie in [0, cols).
  NodeId weighted_softmax_ce(NodeId logits, const std::vector<int>& labels, const Vec& weights);

  /// Per-sample InfoNCE terms of an n x n score matrix:
  ///   t_i = s_ii - logsumexp_b(s_ib) + ln n
  /// so that mean(t) is the contrastive lower-bound estimate, capped at ln n.
  NodeId info_nce_terms(NodeId scores);

  /// Resets all gradients, then runs reverse-mode accumulation from `root`
  /// (which must be 1x1). May be called more than once per tape.
  void backward(NodeId root);

  const Mat& value(NodeId id) const { return nodes_[check(id)].value; }
  /// Zero until a backward pass reaches the node.
  const Mat& grad(NodeId id) const { return nodes_[check(id)].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Mat&)> back;  // null for leaves
  };

  std::size_t check(NodeId id) const {
    require(id >= 0 && id < size(), "net::Tape: node id out of range");
    return static_cast<std::size_t>(id);
  }
  NodeId push(Mat value, std::function<void(Tape&, const Mat&)> back);
  void accumulate(NodeId id, const Mat& g) { nodes_[check(id)].grad += g; }

  std::vector<Node> nodes_;
};

/// Named parameter arrays with fixed shapes. Iteration order is insertion
/// order, which also fixes the checkpoint layout.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Mat> values;

  int add(const std::string& name, Mat v);
  int index_of(std::string_view name) const;  // -1 if absent
  Mat& at(std::string_view name);
  const Mat& at(std::string_view name) const;
  int count() const { return static_cast<int>(values.size()); }
  bool all_params_finite() const;

  /// Text checkpoint: one "name rows cols" header per array followed by
  /// row-major values at full precision (round-trips exactly).
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);
};

/// Forward pass built on top of a ParamSet: every parameter becomes a leaf,
/// then `build` assembles the graph and returns the scalar loss node.
struct ForwardLoss {
  Tape tape;
  NodeId loss = -1;
  std::vector<NodeId> param_leaves;  // aligned with ParamSet order
};

ForwardLoss forward_loss(
    const ParamSet& params,
    const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build);

/// Backward from the recorded loss; returns gradients in ParamSet order.
std::vector<Mat> backward(ForwardLoss& fwd);

/// params <- params - lr * grads. A non-finite gradient aborts the step
/// (no parameter is modified) and reports the offending array.
void sgd_step(ParamSet& params, const std::vector<Mat>& grads, double lr);

/// Initialization: uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);
/// Initialization for embedding tables: N(0, 0.1).
Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::uint64_t seed);

/// Central finite-difference check: compares `analytic` against
/// (f(x+h) - f(x-h)) / 2h entry by entry and returns the worst relative
/// error, with entries below `tiny` in both readings treated as agreeing.
double max_fd_rel_error(const std::function<double(const Mat&)>& f, const Mat& at,
                        const Mat& analytic, double h = 1e-5, double tiny = 1e-7);

}  // namespace depro::net
