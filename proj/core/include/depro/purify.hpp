#pragma once

#include "depro/netcore.hpp"
#include "depro/types.hpp"

#include <iosfwd>
#include <vector>

namespace depro::purify {

/// Per-sample saliency of each local feature slot: the l2 norm of the loss
/// gradient with respect to that slot's embedding, plus the top-M selection.
struct SaliencyReport {
  Mat per_slot_norm;                       // n x kslots, nonnegative
  std::vector<std::vector<int>> selected;  // per sample, ascending, size m each
  int m = 0;                               // ceil(purify_ratio * kslots)
};

/// Number of slots kept: ceil(purify_ratio * kslots). Rejects ratios
/// outside (0, 1].
int kept_slot_count(double purify_ratio, int kslots);

/// Builds the report from already-populated slot gradients (one n x d matrix
/// per slot, e.g. tape.grad of the local-feature leaves after a backward pass
/// from the task loss). Ties rank the lower slot index first.
SaliencyReport saliency_from_grads(const std::vector<Mat>& slot_grads, double purify_ratio);

/// Same, reading the gradients of the given local-feature leaves off a tape.
SaliencyReport saliency(const net::Tape& tape, const std::vector<net::NodeId>& t_slots,
                        double purify_ratio);

struct InfoNceEstimate {
  double value = 0.0;
  int batch_size = 0;
};

/// Differentiable InfoNCE lower-bound estimate for one slot:
/// scores s(i,b) = dot(critic(local_i), global_b) with critic an affine map,
/// estimate = (1/n) sum_i [ s_ii - logsumexp_b(s_ib) + ln n ].
/// Returns the 1x1 estimate node; gradients flow into local, global and the
/// critic parameters.
net::NodeId infonce_node(net::Tape& tape, net::NodeId local, net::NodeId global,
                         net::NodeId critic_w, net::NodeId critic_b);

/// Value-only convenience over infonce_node. critic_w is d_local x d_global,
/// critic_b is 1 x d_global.
InfoNceEstimate infonce(const Mat& local, const Mat& global, const Mat& critic_w,
                        const Mat& critic_b);

/// CSV rows "epoch,slot,fraction" where fraction is the share of samples
/// that kept the slot during the epoch.
void write_selection_rows(std::ostream& out, int epoch, const std::vector<double>& fractions);

}  // namespace depro::purify
