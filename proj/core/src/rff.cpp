#include "depro/rff.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace depro::rff {

namespace {
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

double RffFunction::operator()(double x) const {
  return kSqrt2 * std::cos(omega * x + phi);
}

RffBank sample_bank(int input_dim, int multiplier, std::uint64_t seed) {
  require(input_dim >= 1, "rff::sample_bank: input_dim must be >= 1");
  require(multiplier >= 1, "rff::sample_bank: multiplier must be >= 1");

  RffBank bank;
  bank.input_dim = input_dim;
  bank.multiplier = multiplier;
  bank.seed = seed;
  bank.per_dim.resize(static_cast<std::size_t>(input_dim));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
  for (auto& fns : bank.per_dim) {
    fns.resize(static_cast<std::size_t>(multiplier));
    for (auto& fn : fns) {
      fn.omega = normal(rng);
      fn.phi = uniform(rng);
    }
  }
  return bank;
}

Mat apply(const RffBank& bank, const Mat& features) {
  require(bank.input_dim >= 1 && !bank.per_dim.empty(), "rff::apply: empty bank");
  require(features.cols() == bank.input_dim,
          "rff::apply: feature column count does not match bank input_dim");
  require(all_finite(features), "rff::apply: non-finite feature input");

  const Eigen::Index n = features.rows();
  const int k = bank.multiplier;
  Mat out(n, bank.output_dim());
  for (int d = 0; d < bank.input_dim; ++d) {
    const auto& fns = bank.per_dim[static_cast<std::size_t>(d)];
    for (int j = 0; j < k; ++j) {
      const RffFunction& fn = fns[static_cast<std::size_t>(j)];
      out.col(static_cast<Eigen::Index>(d) * k + j) =
          (kSqrt2 * ((features.col(d).array() * fn.omega) + fn.phi).cos()).matrix();
    }
  }
  return out;
}

Mat standardize(const Mat& features, double std_floor) {
  require(features.rows() >= 1, "rff::standardize: empty input");
  require(all_finite(features), "rff::standardize: non-finite input");

  const double n = static_cast<double>(features.rows());
  Mat out(features.rows(), features.cols());
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double mean = features.col(c).mean();
    const double var = (features.col(c).array() - mean).square().sum() / n;
    const double sd = std::max(std::sqrt(var), std_floor);
    out.col(c) = (features.col(c).array() - mean) / sd;
  }
  return out;
}

void save_bank(const RffBank& bank, const std::string& path) {
  nlohmann::json j;
  j["seed"] = bank.seed;
  j["input_dim"] = bank.input_dim;
  j["multiplier"] = bank.multiplier;
  std::vector<double> omega;
  std::vector<double> phi;
  omega.reserve(static_cast<std::size_t>(bank.output_dim()));
  phi.reserve(static_cast<std::size_t>(bank.output_dim()));
  for (const auto& fns : bank.per_dim) {
    for (const auto& fn : fns) {
      omega.push_back(fn.omega);
      phi.push_back(fn.phi);
    }
  }
  j["omega"] = omega;
  j["phi"] = phi;
  std::ofstream out(path);
  require(out.good(), "rff::save_bank: cannot open " + path);
  out << j.dump(2) << "\n";
}

RffBank load_bank(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "rff::load_bank: cannot open " + path);
  nlohmann::json j;
  in >> j;

  RffBank bank;
  bank.seed = j.at("seed").get<std::uint64_t>();
  bank.input_dim = j.at("input_dim").get<int>();
  bank.multiplier = j.at("multiplier").get<int>();
  require(bank.input_dim >= 1 && bank.multiplier >= 1, "rff::load_bank: bad dims");
  const auto omega = j.at("omega").get<std::vector<double>>();
  const auto phi = j.at("phi").get<std::vector<double>>();
  const auto total = static_cast<std::size_t>(bank.output_dim());
  require(omega.size() == total && phi.size() == total,
          "rff::load_bank: array length does not match dims");
  bank.per_dim.resize(static_cast<std::size_t>(bank.input_dim));
  std::size_t idx = 0;
  for (auto& fns : bank.per_dim) {
    fns.resize(static_cast<std::size_t>(bank.multiplier));
    for (auto& fn : fns) {
      fn.omega = omega[idx];
      fn.phi = phi[idx];
      ++idx;
    }
  }
  return bank;
}

}  // namespace depro::rff
