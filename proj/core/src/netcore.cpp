#include "depro/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <utility>

namespace depro::net {

NodeId Tape::push(Mat value, std::function<void(Tape&, const Mat&)> back) {
  require(value.allFinite(), "net::Tape: non-finite activation produced");
  Node n;
  n.value = std::move(value);
  n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::input(const Mat& v) { return push(v, nullptr); }

NodeId Tape::gather_rows(NodeId table, const std::vector<int>& rows) {
  const Mat& t = value(table);
  Mat out(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < t.rows(), "net::gather_rows: row id out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  return push(std::move(out), [table, rows](Tape& tp, const Mat& g) {
    Mat gt = Mat::Zero(tp.value(table).rows(), tp.value(table).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      gt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    tp.accumulate(table, gt);
  });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  require(value(a).cols() == value(b).rows(), "net::matmul: inner dimensions differ");
  return push(value(a) * value(b), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g * tp.value(b).transpose());
    tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  require(value(a).cols() == value(b).cols(), "net::matmul_nt: column counts differ");
  return push(value(a) * value(b).transpose(), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g * tp.value(b));
    tp.accumulate(b, g.transpose() * tp.value(a));
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "net::add: shape mismatch");
  return push(value(a) + value(b), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

NodeId Tape::add_rowvec(NodeId a, NodeId row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
          "net::add_rowvec: bias must be 1 x cols");
  return push(value(a).rowwise() + value(row).row(0), [a, row](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(row, g.colwise().sum());
  });
}

NodeId Tape::scale(NodeId a, double s) {
  return push(value(a) * s, [a, s](Tape& tp, const Mat& g) { tp.accumulate(a, g * s); });
}

NodeId Tape::tanh(NodeId a) {
  Mat t = value(a).array().tanh();
  return push(t, [a, t](Tape& tp, const Mat& g) {
    tp.accumulate(a, (g.array() * (1.0 - t.array().square())).matrix());
  });
}

NodeId Tape::mean_of(const std::vector<NodeId>& xs) {
  require(!xs.empty(), "net::mean_of: empty input list");
  Mat acc = value(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require(value(xs[i]).rows() == acc.rows() && value(xs[i]).cols() == acc.cols(),
            "net::mean_of: shape mismatch");
    acc += value(xs[i]);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  return push(acc * inv, [xs, inv](Tape& tp, const Mat& g) {
    for (NodeId x : xs) tp.accumulate(x, g * inv);
  });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& xs) {
  require(!xs.empty(), "net::concat_cols: empty input list");
  const Eigen::Index rows = value(xs[0]).rows();
  Eigen::Index cols = 0;
  for (NodeId x : xs) {
    require(value(x).rows() == rows, "net::concat_cols: row counts differ");
    cols += value(x).cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (NodeId x : xs) {
    out.middleCols(at, value(x).cols()) = value(x);
    at += value(x).cols();
  }
  return push(std::move(out), [xs](Tape& tp, const Mat& g) {
    Eigen::Index at = 0;
    for (NodeId x : xs) {
      const Eigen::Index w = tp.value(x).cols();
      tp.accumulate(x, g.middleCols(at, w));
      at += w;
    }
  });
}

NodeId Tape::square_sum(NodeId a) {
  Mat out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  return push(std::move(out), [a](Tape& tp, const Mat& g) {
    tp.accumulate(a, 2.0 * g(0, 0) * tp.value(a));
  });
}

NodeId Tape::weighted_sum(NodeId a, const Mat& coeff) {
  require(coeff.rows() == value(a).rows() && coeff.cols() == value(a).cols(),
          "net::weighted_sum: coefficient shape mismatch");
  Mat out(1, 1);
  out(0, 0) = (value(a).array() * coeff.array()).sum();
  return push(std::move(out), [a, coeff](Tape& tp, const Mat& g) {
    tp.accumulate(a, g(0, 0) * coeff);
  });
}

NodeId Tape::weighted_softmax_ce(NodeId logits, const std::vector<int>& labels,
                                 const Vec& weights) {
  const Mat& z = value(logits);
  const auto n = z.rows();
  require(static_cast<Eigen::Index>(labels.size()) == n,
          "net::weighted_softmax_ce: label count mismatch");
  require(weights.size() == n, "net::weighted_softmax_ce: weight count mismatch");

  Mat probs(n, z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    require(labels[static_cast<std::size_t>(i)] >= 0 &&
                labels[static_cast<std::size_t>(i)] < z.cols(),
            "net::weighted_softmax_ce: label out of range");
    const double m = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    probs.row(i) = e / s;
    const double lse = m + std::log(s);
    loss += weights[i] * (lse - z(i, labels[static_cast<std::size_t>(i)]));
  }
  Mat out(1, 1);
  out(0, 0) = loss / static_cast<double>(n);
  return push(std::move(out), [logits, labels, weights, probs](Tape& tp, const Mat& g) {
    const double gscale = g(0, 0) / static_cast<double>(probs.rows());
    Mat gl = probs;
    for (Eigen::Index i = 0; i < gl.rows(); ++i) {
      gl(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      gl.row(i) *= gscale * weights[i];
    }
    tp.accumulate(logits, gl);
  });
}

NodeId Tape::info_nce_terms(NodeId scores) {
  const Mat& s = value(scores);
  require(s.rows() == s.cols(), "net::info_nce_terms: score matrix must be square");
  const auto n = s.rows();
  const double logn = std::log(static_cast<double>(n));

  Mat probs(n, n);
  Mat terms(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = s.row(i).maxCoeff();
    Eigen::RowVectorXd e = (s.row(i).array() - m).exp();
    const double sum = e.sum();
    probs.row(i) = e / sum;
    terms(i, 0) = s(i, i) - (m + std::log(sum)) + logn;
  }
  return push(std::move(terms), [scores, probs](Tape& tp, const Mat& g) {
    Mat gs = -probs;
    for (Eigen::Index i = 0; i < gs.rows(); ++i) {
      gs(i, i) += 1.0;
      gs.row(i) *= g(i, 0);
    }
    tp.accumulate(scores, gs);
  });
}

void Tape::backward(NodeId root) {
  const std::size_t r = check(root);
  require(nodes_[r].value.rows() == 1 && nodes_[r].value.cols() == 1,
          "net::Tape::backward: root must be a 1x1 scalar node");
  for (auto& n : nodes_) n.grad.setZero();
  nodes_[r].grad(0, 0) = 1.0;
  for (std::size_t i = r + 1; i-- > 0;) {
    if (nodes_[i].back && !nodes_[i].grad.isZero(0.0)) {
      nodes_[i].back(*this, nodes_[i].grad);
    }
  }
}

int ParamSet::add(const std::string& name, Mat v) {
  require(index_of(name) < 0, "net::ParamSet: duplicate parameter name " + name);
  names.push_back(name);
  values.push_back(std::move(v));
  return count() - 1;
}

int ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Mat& ParamSet::at(std::string_view name) {
  const int i = index_of(name);
  require(i >= 0, "net::ParamSet: unknown parameter " + std::string(name));
  return values[static_cast<std::size_t>(i)];
}

const Mat& ParamSet::at(std::string_view name) const {
  const int i = index_of(name);
  require(i >= 0, "net::ParamSet: unknown parameter " + std::string(name));
  return values[static_cast<std::size_t>(i)];
}

bool ParamSet::all_params_finite() const {
  return std::all_of(values.begin(), values.end(), [](const Mat& m) { return m.allFinite(); });
}

void ParamSet::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "net::ParamSet::save: cannot open " + path);
  char buf[64];
  for (int i = 0; i < count(); ++i) {
    const Mat& m = values[static_cast<std::size_t>(i)];
    out << names[static_cast<std::size_t>(i)] << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
        out << buf << (c + 1 == m.cols() ? '\n' : ' ');
      }
    }
  }
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "net::ParamSet::load: cannot open " + path);
  ParamSet p;
  std::string name;
  while (in >> name) {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    require(static_cast<bool>(in >> rows >> cols) && rows >= 1 && cols >= 1,
            "net::ParamSet::load: bad shape header for " + name);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        require(static_cast<bool>(in >> m(r, c)), "net::ParamSet::load: truncated values");
      }
    }
    p.add(name, std::move(m));
  }
  return p;
}

ForwardLoss forward_loss(
    const ParamSet& params,
    const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build) {
  ForwardLoss f;
  f.param_leaves.reserve(static_cast<std::size_t>(params.count()));
  for (const Mat& v : params.values) f.param_leaves.push_back(f.tape.input(v));
  f.loss = build(f.tape, f.param_leaves);
  require(f.loss >= 0, "net::forward_loss: builder returned no loss node");
  return f;
}

std::vector<Mat> backward(ForwardLoss& fwd) {
  fwd.tape.backward(fwd.loss);
  std::vector<Mat> grads;
  grads.reserve(fwd.param_leaves.size());
  for (NodeId id : fwd.param_leaves) grads.push_back(fwd.tape.grad(id));
  return grads;
}

void sgd_step(ParamSet& params, const std::vector<Mat>& grads, double lr) {
  require(grads.size() == static_cast<std::size_t>(params.count()),
          "net::sgd_step: gradient count mismatch");
  for (int i = 0; i < params.count(); ++i) {
    const Mat& g = grads[static_cast<std::size_t>(i)];
    const Mat& v = params.values[static_cast<std::size_t>(i)];
    require(g.rows() == v.rows() && g.cols() == v.cols(),
            "net::sgd_step: gradient shape mismatch for " + params.names[static_cast<std::size_t>(i)]);
    require(g.allFinite(),
            "net::sgd_step: non-finite gradient for " + params.names[static_cast<std::size_t>(i)] +
                "; step aborted");
  }
  for (int i = 0; i < params.count(); ++i) {
    params.values[static_cast<std::size_t>(i)] -= lr * grads[static_cast<std::size_t>(i)];
  }
}

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-s, s);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

double max_fd_rel_error(const std::function<double(const Mat&)>& f, const Mat& at,
                        const Mat& analytic, double h, double tiny) {
  require(analytic.rows() == at.rows() && analytic.cols() == at.cols(),
          "net::max_fd_rel_error: gradient shape mismatch");
  double worst = 0.0;
  Mat x = at;
  for (Eigen::Index r = 0; r < at.rows(); ++r) {
    for (Eigen::Index c = 0; c < at.cols(); ++c) {
      const double orig = x(r, c);
      x(r, c) = orig + h;
      const double fp = f(x);
      x(r, c) = orig - h;
      const double fm = f(x);
      x(r, c) = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic(r, c);
      const double denom = std::max(std::abs(fd), std::abs(an));
      if (denom < tiny) continue;
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace depro::net
