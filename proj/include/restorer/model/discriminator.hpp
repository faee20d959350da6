#pragma once

#include <memory>
#include <vector>

#include "restorer/model/config.hpp"
#include "restorer/model/unet.hpp"

namespace restorer::model {

// Encoder stack on the real/imaginary STFT image with a 1-channel conv head.
template <typename T>
class StftDiscriminator {
 public:
  StftDiscriminator(ParameterSet<T>& params, const std::string& name, const DiscriminatorConfig& cfg,
                    const dsp::StftConfig& stft, Rng& rng);

  /// y [N, L] -> logits [N, 1, T', F'].
  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& y) const;

 private:
  dsp::StftConfig stft_;
  int time_multiple_ = 1;
  int freq_multiple_ = 1;
  std::vector<EncoderBlock<T>> blocks_;
  Conv2dLayer<T> head_;
};

// Strided grouped 1-D convs with layer norm and leaky ReLU.
template <typename T>
class WaveDiscriminator {
 public:
  WaveDiscriminator(ParameterSet<T>& params, const std::string& name, const DiscriminatorConfig& cfg, Rng& rng);

  /// y [N, L] -> logits [N, L'].
  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& y) const;

  int total_stride() const { return total_stride_; }

 private:
  int total_stride_ = 1;
  std::vector<Conv1dLayer<T>> convs_;
  std::vector<LayerNormLayer<T>> norms_;
  Conv1dLayer<T> head_;
};

/// One STFT and one waveform discriminator per generator scale.
template <typename T>
class DiscriminatorSet {
 public:
  DiscriminatorSet(const DiscriminatorConfig& cfg, const GeneratorConfig& gen, std::uint64_t seed);

  int scales() const { return static_cast<int>(stft_.size()); }
  const StftDiscriminator<T>& stft(int k) const { return stft_[static_cast<std::size_t>(k)]; }
  const WaveDiscriminator<T>& wave(int k) const { return wave_[static_cast<std::size_t>(k)]; }
  ParameterSet<T>& parameters() { return *params_; }
  const ParameterSet<T>& parameters() const { return *params_; }
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::unique_ptr<ParameterSet<T>> params_;
  std::vector<StftDiscriminator<T>> stft_;
  std::vector<WaveDiscriminator<T>> wave_;
};

}  // namespace restorer::model
