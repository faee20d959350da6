#include "restorer/train/adam.hpp"

#include <cmath>

#include <fmt/format.h>

namespace restorer::train {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
}

template <typename T>
void Adam<T>::ensure_state(const model::ParameterSet<T>& params) {
  if (m_.size() == params.size()) return;
  if (!m_.empty()) throw std::logic_error("adam: parameter set changed size");
  for (const auto& p : params.all()) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

template <typename T>
void Adam<T>::step(model::ParameterSet<T>& params) {
  ensure_state(params);
  for (const auto& p : params.all()) {
    for (T g : p.grad.values())
      if (!std::isfinite(static_cast<double>(g)))
        throw NonFiniteGradient(fmt::format("non-finite gradient in parameter {}", p.name));
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& p : params.all()) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    const bool has_grad = p.grad.numel() == p.value.numel();
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = has_grad ? static_cast<double>(p.grad[j]) : 0.0;
      const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = cfg_.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg_.eps);
      p.value[j] = static_cast<T>(p.value[j] - update);
    }
  }
}

template <typename T>
void Adam<T>::export_to(nn::Checkpoint& ckpt, const model::ParameterSet<T>& params, const std::string& prefix) const {
  std::size_t i = 0;
  for (const auto& p : params.all()) {
    if (i < m_.size()) {
      ckpt.add(prefix + "m." + p.name, m_[i]);
      ckpt.add(prefix + "v." + p.name, v_[i]);
    }
    ++i;
  }
}

template <typename T>
void Adam<T>::import_from(const nn::Checkpoint& ckpt, const model::ParameterSet<T>& params, const std::string& prefix,
                          std::int64_t steps) {
  m_.clear();
  v_.clear();
  t_ = steps;
  if (steps == 0) return;
  for (const auto& p : params.all()) {
    m_.push_back(ckpt.get<T>(prefix + "m." + p.name));
    v_.push_back(ckpt.get<T>(prefix + "v." + p.name));
    if (m_.back().shape() != p.value.shape() || v_.back().shape() != p.value.shape())
      throw nn::CheckpointError("optimizer state shape mismatch for " + p.name);
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace restorer::train
