#pragma once

#include <optional>
#include <vector>

#include "restorer/model/config.hpp"
#include "restorer/model/layers.hpp"

namespace restorer::model {

/// Stride (time, freq) of a down-sampling block.
std::array<int, 2> block_stride(Downsample d);
/// Kernel (time, freq) of a down-sampling convolution.
std::array<int, 2> block_kernel(Downsample d);

enum class BlockStyle {
  WeightNormElu,    // generator
  LayerNormLeaky,   // discriminator
};

// 3x3 conv then a strided down-sampling conv, no shortcut.
template <typename T>
class EncoderBlock {
 public:
  EncoderBlock(ParameterSet<T>& params, const std::string& name, int in, int out, Downsample d, BlockStyle style,
               Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const;

  std::array<int, 2> stride() const { return stride_; }
  Conv2dLayer<T>& conv_a() { return conv_a_; }
  Conv2dLayer<T>& conv_b() { return conv_b_; }

 private:
  nn::Var<T> activate(nn::Tape<T>& tape, const nn::Var<T>& x, const LayerNormLayer<T>& norm) const;

  BlockStyle style_;
  std::array<int, 2> stride_;
  Conv2dLayer<T> conv_a_, conv_b_;
  LayerNormLayer<T> norm_a_, norm_b_;
};

// Transposed conv then 3x3 conv, plus a nearest-neighbour shortcut that is
// projected by a 1x1 conv when the channel count changes.
template <typename T>
class DecoderBlock {
 public:
  DecoderBlock(ParameterSet<T>& params, const std::string& name, int in, int mid, int out, Downsample d,
               bool linear_output, Rng& rng);

  /// `skip`, when given, is concatenated after `x` on the channel axis.
  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x, const std::optional<nn::Var<T>>& skip = {}) const;

  bool has_projection() const { return projection_.has_value(); }
  int in_channels() const { return in_; }
  Conv2dLayer<T>& up() { return up_; }
  Conv2dLayer<T>& conv() { return conv_; }
  Conv2dLayer<T>* projection() { return projection_ ? &*projection_ : nullptr; }

 private:
  int in_;
  std::array<int, 2> stride_;
  bool linear_output_;
  Conv2dLayer<T> up_, conv_;
  std::optional<Conv2dLayer<T>> projection_;
};

template <typename T>
class UNet {
 public:
  UNet(ParameterSet<T>& params, const std::string& name, int in_channels, const std::vector<int>& channels,
       const std::vector<Downsample>& downsample, Rng& rng);

  /// x [N, C, T, F] with T and F divisible by time_multiple() and freq_multiple().
  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const;

  int time_multiple() const { return time_multiple_; }
  int freq_multiple() const { return freq_multiple_; }
  std::vector<EncoderBlock<T>>& encoders() { return encoders_; }
  std::vector<DecoderBlock<T>>& decoders() { return decoders_; }
  /// Zeroes the output-producing layers so the network returns exactly zero.
  void zero_output();

 private:
  int time_multiple_ = 1;
  int freq_multiple_ = 1;
  std::vector<EncoderBlock<T>> encoders_;
  std::vector<DecoderBlock<T>> decoders_;  // decoders_[i] mirrors encoders_[i]
};

/// Reflect-pads the last two axes up to the given multiples.
template <typename T>
nn::Var<T> pad_to_multiple(const nn::Var<T>& x, int time_multiple, int freq_multiple);

}  // namespace restorer::model
