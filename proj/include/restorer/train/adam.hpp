#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "restorer/model/layers.hpp"

namespace restorer::train {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;

  void validate() const;
};

// Bias-corrected Adam over one ParameterSet. Parameters without a gradient
// are treated as having a zero gradient.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  /// Throws NonFiniteGradient naming the parameter before changing anything.
  void step(model::ParameterSet<T>& params);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void export_to(nn::Checkpoint& ckpt, const model::ParameterSet<T>& params, const std::string& prefix) const;
  void import_from(const nn::Checkpoint& ckpt, const model::ParameterSet<T>& params, const std::string& prefix,
                   std::int64_t steps);

 private:
  void ensure_state(const model::ParameterSet<T>& params);

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<nn::Tensor<T>> m_, v_;
};

}  // namespace restorer::train
