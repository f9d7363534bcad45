#pragma once

#include "depro/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace depro::rff {

/// One random Fourier map x -> sqrt(2)*cos(omega*x + phi).
/// omega ~ N(0,1), phi ~ U(0, 2*pi); output always lies in [-sqrt(2), sqrt(2)].
struct RffFunction {
  double omega = 0.0;
  double phi = 0.0;

  double operator()(double x) const;
};

/// A fixed sample of `multiplier` cosine maps per input dimension.
/// Immutable after sampling; the same seed always reproduces the same bank.
struct RffBank {
  int input_dim = 0;
  int multiplier = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<RffFunction>> per_dim;  // [input_dim][multiplier]

  int output_dim() const { return input_dim * multiplier; }
};

/// Draws input_dim * multiplier maps, omega i.i.d. standard normal and phi
/// i.i.d. uniform on [0, 2*pi). Rejects non-positive dimensions.
RffBank sample_bank(int input_dim, int multiplier, std::uint64_t seed);

/// Reconstructs a batch (n x input_dim) into (n x input_dim*multiplier).
/// Output column d*multiplier + j holds the j-th map of input dimension d,
/// so column blocks are grouped by original dimension.
Mat apply(const RffBank& bank, const Mat& features);

/// Z-scores each column with batch mean/std (std floored at std_floor) so the
/// standard-normal frequencies of the bank cover a meaningful range.
Mat standardize(const Mat& features, double std_floor = 1e-6);

void save_bank(const RffBank& bank, const std::string& path);
RffBank load_bank(const std::string& path);

}  // namespace depro::rff
