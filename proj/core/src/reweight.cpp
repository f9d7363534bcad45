#include "depro/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace depro::reweight {

WeightTable make_table(int n, double lr, double lr_decay) {
  require(n >= 1, "reweight::make_table: table size must be >= 1");
  require(lr > 0.0, "reweight::make_table: lr must be positive");
  require(lr_decay >= 0.0, "reweight::make_table: lr_decay must be nonnegative");
  WeightTable t;
  t.theta = Vec::Zero(n);
  t.lr = lr;
  t.lr_decay = lr_decay;
  return t;
}

Vec realize_all(const WeightTable& table) {
  require(table.theta.allFinite(), "reweight::realize: non-finite theta");
  const double n = static_cast<double>(table.size());
  const double m = table.theta.maxCoeff();
  Vec e = (table.theta.array() - m).exp();
  return e * (n / e.sum());
}

Vec realize(const WeightTable& table, const std::vector<int>& indices) {
  Vec full = realize_all(table);
  Vec out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < table.size(),
            "reweight::realize: sample index out of range");
    out[static_cast<Eigen::Index>(i)] = full[indices[i]];
  }
  return out;
}

Vec weight_grad(const Mat& reconstructed_batch, const Vec& weights, int multiplier) {
  return indep::importance_weight_grad(reconstructed_batch, weights, multiplier);
}

double effective_lr(const WeightTable& table) {
  return table.lr / (1.0 + table.lr_decay * static_cast<double>(table.step_count));
}

double weight_step(WeightTable& table, const Mat& reconstructed_batch,
                   const std::vector<int>& batch_indices, int multiplier) {
  require(batch_indices.size() >= 2, "reweight::weight_step: batch must hold >= 2 samples");
  require(reconstructed_batch.rows() == static_cast<Eigen::Index>(batch_indices.size()),
          "reweight::weight_step: batch rows do not match index count");

  const double n_total = static_cast<double>(table.size());
  const Vec w_batch = realize(table, batch_indices);
  const Vec g_w = indep::importance_weight_grad(reconstructed_batch, w_batch, multiplier);

  // Chain rule through w = n * softmax(theta), restricted to the batch slice:
  // dL/dtheta_p = g_p w_p - (w_p / n) * sum_m g_m w_m.
  const double gw_dot = g_w.dot(w_batch);
  const double step = effective_lr(table);
  for (std::size_t i = 0; i < batch_indices.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    const double grad_theta = g_w[ei] * w_batch[ei] - w_batch[ei] * gw_dot / n_total;
    double& th = table.theta[batch_indices[i]];
    th = std::clamp(th - step * grad_theta, -kThetaClamp, kThetaClamp);
  }
  table.step_count += 1;

  const Vec w_after = realize(table, batch_indices);
  return indep::importance_decorr_objective(reconstructed_batch, w_after, multiplier).total;
}

void save_table(const WeightTable& table, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "reweight::save_table: cannot open " + path);
  char buf[64];
  out << "weight_table " << table.size() << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %llu\n", table.lr, table.lr_decay,
                static_cast<unsigned long long>(table.step_count));
  out << buf;
  for (int i = 0; i < table.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", table.theta[i]);
    out << buf;
  }
}

WeightTable load_table(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "reweight::load_table: cannot open " + path);
  std::string magic;
  int n = 0;
  in >> magic >> n;
  require(magic == "weight_table" && n >= 1, "reweight::load_table: bad header");
  WeightTable t;
  unsigned long long steps = 0;
  in >> t.lr >> t.lr_decay >> steps;
  t.step_count = steps;
  t.theta = Vec(n);
  for (int i = 0; i < n; ++i) {
    require(static_cast<bool>(in >> t.theta[i]), "reweight::load_table: truncated file");
  }
  return t;
}

void write_weight_histogram(std::ostream& out, int epoch, const Vec& realized, int bins) {
  require(bins >= 1, "reweight::write_weight_histogram: bins must be >= 1");
  const double lo = 0.0;
  const double hi = std::max(realized.maxCoeff(), 1e-12);
  const double width = (hi - lo) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < realized.size(); ++i) {
    int b = static_cast<int>((realized[i] - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    counts[static_cast<std::size_t>(b)] += 1;
  }
  for (int b = 0; b < bins; ++b) {
    out << epoch << ',' << (lo + b * width) << ',' << (lo + (b + 1) * width) << ','
        << counts[static_cast<std::size_t>(b)] << '\n';
  }
}

}  // namespace depro::reweight
