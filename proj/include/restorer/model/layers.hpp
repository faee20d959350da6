#pragma once

#include <cstdint>
#include <deque>
#include <string>

#include "restorer/nn/autograd.hpp"
#include "restorer/nn/checkpoint.hpp"
#include "restorer/nn/ops.hpp"
#include "restorer/random.hpp"

namespace restorer::model {

/// Owns named parameters at stable addresses.
template <typename T>
class ParameterSet {
 public:
  nn::Parameter<T>& add(std::string name, nn::Tensor<T> value);

  std::deque<nn::Parameter<T>>& all() { return params_; }
  const std::deque<nn::Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  nn::Parameter<T>* find(const std::string& name);
  std::int64_t element_count() const;
  void zero_grad();

  /// Appends every parameter as `prefix + name`.
  void export_to(nn::Checkpoint& ckpt, const std::string& prefix = "") const;
  /// Copies values by name; throws CheckpointError on missing names or shape mismatch.
  void import_from(const nn::Checkpoint& ckpt, const std::string& prefix = "");

 private:
  std::deque<nn::Parameter<T>> params_;
};

enum class ConvKind { Forward, Transposed };

// 2-D convolution with optional weight normalization. Forward weights are
// [out, in, kh, kw]; transposed weights are [in, out, kh, kw].
template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParameterSet<T>& params, const std::string& name, int in, int out, int kh, int kw,
              nn::Conv2dSpec spec, bool weight_norm, Rng& rng, ConvKind kind = ConvKind::Forward);

  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  const nn::Conv2dSpec& spec() const { return spec_; }
  nn::Parameter<T>& direction() const { return *v_; }
  nn::Parameter<T>* gain() const { return g_; }
  nn::Parameter<T>& bias() const { return *b_; }
  /// Makes the layer output its bias only.
  void zero_weights();

 private:
  nn::Parameter<T>* v_ = nullptr;
  nn::Parameter<T>* g_ = nullptr;
  nn::Parameter<T>* b_ = nullptr;
  nn::Conv2dSpec spec_;
  ConvKind kind_ = ConvKind::Forward;
  int in_ = 0;
  int out_ = 0;
};

template <typename T>
class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(ParameterSet<T>& params, const std::string& name, int in, int out, int kernel, nn::Conv1dSpec spec,
              Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const;

  int out_channels() const { return out_; }

 private:
  nn::Parameter<T>* w_ = nullptr;
  nn::Parameter<T>* b_ = nullptr;
  nn::Conv1dSpec spec_;
  int out_ = 0;
};

template <typename T>
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(ParameterSet<T>& params, const std::string& name, int channels);

  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const;

 private:
  nn::Parameter<T>* gain_ = nullptr;
  nn::Parameter<T>* bias_ = nullptr;
};

}  // namespace restorer::model
