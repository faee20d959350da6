#pragma once

#include <functional>
#include <vector>

#include "restorer/nn/autograd.hpp"

namespace restorer::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every element; otherwise an evenly strided subset per tensor.
  std::int64_t max_elements = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::vector<double> per_input;  // max relative error of each input tensor
};

/// Builds a scalar from variables wrapping `inputs`.
using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Compares reverse-mode gradients with central differences. The relative
// error uses max(|a|, |n|, 1e-3 * largest analytic magnitude in the tensor)
// as denominator so near-zero entries do not dominate. Throws
// std::domain_error if the function or a gradient is not finite.
GradCheckResult grad_check(const ScalarFn& fn, std::vector<Tensor<double>> inputs, const GradCheckOptions& opts = {});

}  // namespace restorer::nn
