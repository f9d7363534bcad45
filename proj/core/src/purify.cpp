#include "depro/purify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace depro::purify {

int kept_slot_count(double purify_ratio, int kslots) {
  require(purify_ratio > 0.0 && purify_ratio <= 1.0,
          "purify: purify_ratio must lie in (0, 1]");
  require(kslots >= 1, "purify: kslots must be >= 1");
  const int m = static_cast<int>(std::ceil(purify_ratio * kslots));
  return std::clamp(m, 1, kslots);
}

SaliencyReport saliency_from_grads(const std::vector<Mat>& slot_grads, double purify_ratio) {
  require(!slot_grads.empty(), "purify::saliency: no slot gradients");
  const int kslots = static_cast<int>(slot_grads.size());
  const Eigen::Index n = slot_grads[0].rows();
  for (const Mat& g : slot_grads) {
    require(g.rows() == n, "purify::saliency: slot gradient row counts differ");
  }

  SaliencyReport rep;
  rep.m = kept_slot_count(purify_ratio, kslots);
  rep.per_slot_norm = Mat(n, kslots);
  for (int j = 0; j < kslots; ++j) {
    rep.per_slot_norm.col(j) = slot_grads[static_cast<std::size_t>(j)].rowwise().norm();
  }

  rep.selected.resize(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(kslots));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return rep.per_slot_norm(i, a) > rep.per_slot_norm(i, b);
    });
    auto& sel = rep.selected[static_cast<std::size_t>(i)];
    sel.assign(order.begin(), order.begin() + rep.m);
    std::sort(sel.begin(), sel.end());
  }
  return rep;
}

SaliencyReport saliency(const net::Tape& tape, const std::vector<net::NodeId>& t_slots,
                        double purify_ratio) {
  std::vector<Mat> grads;
  grads.reserve(t_slots.size());
  for (net::NodeId id : t_slots) grads.push_back(tape.grad(id));
  return saliency_from_grads(grads, purify_ratio);
}

net::NodeId infonce_node(net::Tape& tape, net::NodeId local, net::NodeId global,
                         net::NodeId critic_w, net::NodeId critic_b) {
  const Eigen::Index n = tape.value(local).rows();
  require(tape.value(global).rows() == n, "purify::infonce: local/global row counts differ");
  require(n >= 1, "purify::infonce: empty batch");
  net::NodeId proj = tape.add_rowvec(tape.matmul(local, critic_w), critic_b);
  net::NodeId scores = tape.matmul_nt(proj, global);
  net::NodeId terms = tape.info_nce_terms(scores);
  return tape.scale(tape.weighted_sum(terms, Mat::Ones(n, 1)), 1.0 / static_cast<double>(n));
}

InfoNceEstimate infonce(const Mat& local, const Mat& global, const Mat& critic_w,
                        const Mat& critic_b) {
  net::Tape tape;
  net::NodeId l = tape.input(local);
  net::NodeId g = tape.input(global);
  net::NodeId w = tape.input(critic_w);
  net::NodeId b = tape.input(critic_b);
  net::NodeId est = infonce_node(tape, l, g, w, b);
  InfoNceEstimate out;
  out.value = tape.value(est)(0, 0);
  out.batch_size = static_cast<int>(local.rows());
  return out;
}

void write_selection_rows(std::ostream& out, int epoch, const std::vector<double>& fractions) {
  for (std::size_t j = 0; j < fractions.size(); ++j) {
    out << epoch << ',' << j << ',' << fractions[j] << '\n';
  }
}

}  // namespace depro::purify
