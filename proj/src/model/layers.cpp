#include "restorer/model/layers.hpp"

#include <cmath>

#include <fmt/format.h>

namespace restorer::model {

template <typename T>
nn::Parameter<T>& ParameterSet<T>::add(std::string name, nn::Tensor<T> value) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
  auto& p = params_.emplace_back();
  p.name = std::move(name);
  p.value = std::move(value);
  return p;
}

template <typename T>
nn::Parameter<T>* ParameterSet<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::int64_t ParameterSet<T>::element_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void ParameterSet<T>::export_to(nn::Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& p : params_) ckpt.add(prefix + p.name, p.value);
}

template <typename T>
void ParameterSet<T>::import_from(const nn::Checkpoint& ckpt, const std::string& prefix) {
  for (auto& p : params_) {
    const auto* entry = ckpt.find(prefix + p.name);
    if (!entry) throw nn::CheckpointError("checkpoint is missing parameter " + prefix + p.name);
    nn::Tensor<T> value = std::visit([](const auto& t) { return t.template cast<T>(); }, *entry);
    if (value.shape() != p.value.shape())
      throw nn::CheckpointError(fmt::format("parameter {}: checkpoint shape {} but model expects {}", p.name,
                                            nn::to_string(value.shape()), nn::to_string(p.value.shape())));
    p.value = std::move(value);
  }
}

namespace {

template <typename T>
nn::Tensor<T> uniform_tensor(nn::Shape shape, double bound, Rng& rng) {
  nn::Tensor<T> t(std::move(shape));
  for (auto& x : t.values()) x = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

// Per-slice L2 norm along `axis` of a rank-4 tensor.
template <typename T>
nn::Tensor<T> slice_norms(const nn::Tensor<T>& v, int axis) {
  const auto& s = v.shape();
  nn::Tensor<T> g(nn::Shape{s[axis]});
  std::vector<double> acc(static_cast<std::size_t>(s[axis]), 0.0);
  std::int64_t inner = 1;
  for (int a = axis + 1; a < v.rank(); ++a) inner *= s[a];
  for (std::int64_t i = 0; i < v.numel(); ++i) {
    const auto c = (i / inner) % s[axis];
    acc[c] += static_cast<double>(v[i]) * v[i];
  }
  for (std::int64_t c = 0; c < s[axis]; ++c) g[c] = static_cast<T>(std::sqrt(acc[c]));
  return g;
}

}  // namespace

template <typename T>
Conv2dLayer<T>::Conv2dLayer(ParameterSet<T>& params, const std::string& name, int in, int out, int kh, int kw,
                            nn::Conv2dSpec spec, bool weight_norm, Rng& rng, ConvKind kind)
    : spec_(spec), kind_(kind), in_(in), out_(out) {
  const bool transposed = kind == ConvKind::Transposed;
  const int group_in = in / spec.groups;
  const nn::Shape shape = transposed ? nn::Shape{in, out, kh, kw} : nn::Shape{out, group_in, kh, kw};
  double fan_in = static_cast<double>(group_in) * kh * kw;
  if (transposed) fan_in /= static_cast<double>(spec.stride[0] * spec.stride[1]);
  const double bound = std::sqrt(6.0 / std::max(fan_in, 1.0));
  v_ = &params.add(name + ".v", uniform_tensor<T>(shape, bound, rng));
  if (weight_norm) g_ = &params.add(name + ".g", slice_norms(v_->value, transposed ? 1 : 0));
  b_ = &params.add(name + ".b", nn::Tensor<T>(nn::Shape{out}));
}

template <typename T>
nn::Var<T> Conv2dLayer<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  auto w = tape.parameter(*v_);
  if (g_) w = nn::weight_norm(w, tape.parameter(*g_), kind_ == ConvKind::Transposed ? 1 : 0);
  auto b = tape.parameter(*b_);
  return kind_ == ConvKind::Transposed ? nn::conv2d_transpose(x, w, b, spec_) : nn::conv2d(x, w, b, spec_);
}

template <typename T>
void Conv2dLayer<T>::zero_weights() {
  if (g_)
    g_->value.fill(T(0));
  else
    v_->value.fill(T(0));
}

template <typename T>
Conv1dLayer<T>::Conv1dLayer(ParameterSet<T>& params, const std::string& name, int in, int out, int kernel,
                            nn::Conv1dSpec spec, Rng& rng)
    : spec_(spec), out_(out) {
  const int group_in = in / spec.groups;
  const double bound = std::sqrt(6.0 / (static_cast<double>(group_in) * kernel));
  w_ = &params.add(name + ".w", uniform_tensor<T>(nn::Shape{out, group_in, kernel}, bound, rng));
  b_ = &params.add(name + ".b", nn::Tensor<T>(nn::Shape{out}));
}

template <typename T>
nn::Var<T> Conv1dLayer<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  return nn::conv1d(x, tape.parameter(*w_), tape.parameter(*b_), spec_);
}

template <typename T>
LayerNormLayer<T>::LayerNormLayer(ParameterSet<T>& params, const std::string& name, int channels) {
  gain_ = &params.add(name + ".gain", nn::Tensor<T>(nn::Shape{channels}, T(1)));
  bias_ = &params.add(name + ".bias", nn::Tensor<T>(nn::Shape{channels}));
}

template <typename T>
nn::Var<T> LayerNormLayer<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  return nn::layer_norm(x, tape.parameter(*gain_), tape.parameter(*bias_));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class Conv1dLayer<float>;
template class Conv1dLayer<double>;
template class LayerNormLayer<float>;
template class LayerNormLayer<double>;

}  // namespace restorer::model
