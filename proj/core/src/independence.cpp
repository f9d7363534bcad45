#include "depro/independence.hpp"

#include <cmath>
#include <ostream>

namespace depro::indep {

namespace {

void check_blocks(const Mat& u, const Mat& v) {
  require(u.rows() == v.rows(), "indep: block row counts differ");
  require(u.rows() >= 2, "indep: need n >= 2 for the unbiased estimator");
  require(all_finite(u) && all_finite(v), "indep: non-finite block entries");
}

void check_weights(const Vec& w, Eigen::Index n) {
  require(w.size() == n, "indep: weight length does not match row count");
  require(w.minCoeff() >= 0.0, "indep: negative weight");
  require(w.allFinite(), "indep: non-finite weight");
}

}  // namespace

CrossCov cross_cov(const Mat& u_block, const Mat& v_block) {
  check_blocks(u_block, v_block);
  const double n = static_cast<double>(u_block.rows());
  Mat du = u_block.rowwise() - (u_block.colwise().sum() / n);
  Mat dv = v_block.rowwise() - (v_block.colwise().sum() / n);
  CrossCov c;
  c.matrix = du.transpose() * dv / (n - 1.0);
  return c;
}

Mat weighted_centered(const Mat& block, const Vec& weights) {
  const double n = static_cast<double>(block.rows());
  Mat wb = block.array().colwise() * weights.array();
  return wb.rowwise() - (wb.colwise().sum() / n);
}

CrossCov weighted_cross_cov(const Mat& u_block, const Mat& v_block, const Vec& weights) {
  check_blocks(u_block, v_block);
  check_weights(weights, u_block.rows());
  const double n = static_cast<double>(u_block.rows());
  Mat du = weighted_centered(u_block, weights);
  Mat dv = weighted_centered(v_block, weights);
  CrossCov c;
  c.matrix = du.transpose() * dv / (n - 1.0);
  return c;
}

double frob_sq(const CrossCov& c) {
  require(all_finite(c.matrix), "indep::frob_sq: non-finite entries");
  return c.matrix.squaredNorm();
}

DecorrObjective decorr_objective(const Mat& reconstructed, const Vec& weights, int multiplier) {
  require(multiplier >= 1, "indep::decorr_objective: multiplier must be >= 1");
  require(reconstructed.cols() % multiplier == 0,
          "indep::decorr_objective: column count not divisible by multiplier");
  require(reconstructed.rows() >= 2, "indep::decorr_objective: need n >= 2");
  require(all_finite(reconstructed), "indep::decorr_objective: non-finite input");
  check_weights(weights, reconstructed.rows());

  const int m = static_cast<int>(reconstructed.cols()) / multiplier;
  const double n = static_cast<double>(reconstructed.rows());
  Mat centered = weighted_centered(reconstructed, weights);

  DecorrObjective obj;
  obj.per_pair.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i) {
    const auto bi = centered.middleCols(static_cast<Eigen::Index>(i) * multiplier, multiplier);
    for (int j = i + 1; j < m; ++j) {
      const auto bj = centered.middleCols(static_cast<Eigen::Index>(j) * multiplier, multiplier);
      const Mat sigma = bi.transpose() * bj / (n - 1.0);
      const double f = sigma.squaredNorm();
      obj.per_pair.push_back({i, j, f});
      obj.total += f;
    }
  }
  return obj;
}

Vec weight_grad(const Mat& reconstructed, const Vec& weights, int multiplier) {
  require(multiplier >= 1, "indep::weight_grad: multiplier must be >= 1");
  require(reconstructed.cols() % multiplier == 0,
          "indep::weight_grad: column count not divisible by multiplier");
  require(reconstructed.rows() >= 2, "indep::weight_grad: need n >= 2");
  check_weights(weights, reconstructed.rows());

  const int m = static_cast<int>(reconstructed.cols()) / multiplier;
  const Eigen::Index rows = reconstructed.rows();
  const double n = static_cast<double>(rows);
  Mat centered = weighted_centered(reconstructed, weights);

  // dTotal/dCentered, assembled block-pair by block-pair.
  Mat g = Mat::Zero(rows, reconstructed.cols());
  for (int i = 0; i < m; ++i) {
    const auto bi = centered.middleCols(static_cast<Eigen::Index>(i) * multiplier, multiplier);
    for (int j = i + 1; j < m; ++j) {
      const auto bj = centered.middleCols(static_cast<Eigen::Index>(j) * multiplier, multiplier);
      const Mat sigma = bi.transpose() * bj / (n - 1.0);
      g.middleCols(static_cast<Eigen::Index>(i) * multiplier, multiplier) +=
          (2.0 / (n - 1.0)) * bj * sigma.transpose();
      g.middleCols(static_cast<Eigen::Index>(j) * multiplier, multiplier) +=
          (2.0 / (n - 1.0)) * bi * sigma;
    }
  }

  // Through the centering: dCentered_{i,c}/dw_m = (delta_im - 1/n) * X_{m,c}.
  Mat h = g.rowwise() - (g.colwise().sum() / n);
  return (h.array() * reconstructed.array()).rowwise().sum().matrix();
}

namespace {

// Rows centered on the weighted mean: x_i - (1/n) sum_j w_j x_j.
Mat importance_centered(const Mat& block, const Vec& weights) {
  const double n = static_cast<double>(block.rows());
  Eigen::RowVectorXd mean = (block.array().colwise() * weights.array()).colwise().sum() / n;
  return block.rowwise() - mean;
}

}  // namespace

CrossCov importance_cross_cov(const Mat& u_block, const Mat& v_block, const Vec& weights) {
  check_blocks(u_block, v_block);
  check_weights(weights, u_block.rows());
  const double n = static_cast<double>(u_block.rows());
  Mat du = importance_centered(u_block, weights);
  Mat dv = importance_centered(v_block, weights);
  CrossCov c;
  c.matrix = du.transpose() * (dv.array().colwise() * weights.array()).matrix() / (n - 1.0);
  return c;
}

DecorrObjective importance_decorr_objective(const Mat& reconstructed, const Vec& weights,
                                            int multiplier) {
  require(multiplier >= 1, "indep::importance_decorr_objective: multiplier must be >= 1");
  require(reconstructed.cols() % multiplier == 0,
          "indep::importance_decorr_objective: column count not divisible by multiplier");
  require(reconstructed.rows() >= 2, "indep::importance_decorr_objective: need n >= 2");
  require(all_finite(reconstructed), "indep::importance_decorr_objective: non-finite input");
  check_weights(weights, reconstructed.rows());

  const int m = static_cast<int>(reconstructed.cols()) / multiplier;
  const double n = static_cast<double>(reconstructed.rows());
  Mat c = importance_centered(reconstructed, weights);
  Mat wc = c.array().colwise() * weights.array();

  DecorrObjective obj;
  obj.per_pair.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i) {
    const auto ci = c.middleCols(static_cast<Eigen::Index>(i) * multiplier, multiplier);
    for (int j = i + 1; j < m; ++j) {
      const auto wcj = wc.middleCols(static_cast<Eigen::Index>(j) * multiplier, multiplier);
      const Mat sigma = ci.transpose() * wcj / (n - 1.0);
      const double f = sigma.squaredNorm();
      obj.per_pair.push_back({i, j, f});
      obj.total += f;
    }
  }
  return obj;
}

Vec importance_weight_grad(const Mat& reconstructed, const Vec& weights, int multiplier) {
  require(multiplier >= 1, "indep::importance_weight_grad: multiplier must be >= 1");
  require(reconstructed.cols() % multiplier == 0,
          "indep::importance_weight_grad: column count not divisible by multiplier");
  require(reconstructed.rows() >= 2, "indep::importance_weight_grad: need n >= 2");
  check_weights(weights, reconstructed.rows());

  const int m = static_cast<int>(reconstructed.cols()) / multiplier;
  const Eigen::Index rows = reconstructed.rows();
  const double n = static_cast<double>(rows);
  Mat c = importance_centered(reconstructed, weights);

  Vec grad = Vec::Zero(rows);
  Mat gc = Mat::Zero(rows, reconstructed.cols());  // dL/dC (through both factors)
  for (int i = 0; i < m; ++i) {
    const auto ci = c.middleCols(static_cast<Eigen::Index>(i) * multiplier, multiplier);
    for (int j = i + 1; j < m; ++j) {
      const auto cj = c.middleCols(static_cast<Eigen::Index>(j) * multiplier, multiplier);
      const Mat sigma =
          ci.transpose() * (cj.array().colwise() * weights.array()).matrix() / (n - 1.0);
      // Direct dependence through the diagonal weight: sum_pair row products.
      grad += (2.0 / (n - 1.0)) * ((ci * sigma).array() * cj.array()).rowwise().sum().matrix();
      const Mat wci = ci.array().colwise() * weights.array();
      const Mat wcj = cj.array().colwise() * weights.array();
      gc.middleCols(static_cast<Eigen::Index>(i) * multiplier, multiplier) +=
          (2.0 / (n - 1.0)) * wcj * sigma.transpose();
      gc.middleCols(static_cast<Eigen::Index>(j) * multiplier, multiplier) +=
          (2.0 / (n - 1.0)) * wci * sigma;
    }
  }
  // Through the weighted mean: dC_{i,c}/dw_m = -X_{m,c} / n for every i.
  grad -= (reconstructed.array() * (gc.colwise().sum().replicate(rows, 1)).array())
              .rowwise()
              .sum()
              .matrix() /
          n;
  return grad;
}

double mean_pair_norm(const DecorrObjective& obj) {
  if (obj.per_pair.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : obj.per_pair) sum += std::sqrt(p.frob_sq);
  return sum / static_cast<double>(obj.per_pair.size());
}

void write_pair_rows(std::ostream& out, long iteration, const DecorrObjective& obj) {
  for (const auto& p : obj.per_pair) {
    out << iteration << ',' << p.i << ',' << p.j << ',' << p.frob_sq << '\n';
  }
}

}  // namespace depro::indep
