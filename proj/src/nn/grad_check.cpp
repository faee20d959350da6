#include "restorer/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace restorer::nn {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const double v = fn(tape, vars).item();
  if (!std::isfinite(v)) throw std::domain_error("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, std::vector<Tensor<double>> inputs, const GradCheckOptions& opts) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    tape.backward(fn(tape, vars));
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const auto& g = vars[i].grad();
      analytic.push_back(g.empty() ? Tensor<double>(inputs[i].shape()) : g);
    }
  }

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const auto n = inputs[t].numel();
    double largest = 0.0;
    for (double v : analytic[t].values()) {
      if (!std::isfinite(v)) throw std::domain_error("grad_check: analytic gradient is not finite");
      largest = std::max(largest, std::abs(v));
    }
    result.per_input.push_back(0.0);
    const std::int64_t stride = opts.max_elements > 0 ? std::max<std::int64_t>(1, n / opts.max_elements) : 1;
    for (std::int64_t i = 0; i < n; i += stride) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + opts.step;
      const double up = evaluate(fn, inputs);
      inputs[t][i] = saved - opts.step;
      const double down = evaluate(fn, inputs);
      inputs[t][i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3 * largest, 1e-10});
      const double err = std::abs(a - numeric) / denom;
      result.per_input[t] = std::max(result.per_input[t], err);
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = t;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace restorer::nn
