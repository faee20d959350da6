#include "restorer/model/discriminator.hpp"

#include <fmt/format.h>

namespace restorer::model {

template <typename T>
StftDiscriminator<T>::StftDiscriminator(ParameterSet<T>& params, const std::string& name,
                                        const DiscriminatorConfig& cfg, const dsp::StftConfig& stft, Rng& rng)
    : stft_(stft) {
  int prev = 2;
  for (std::size_t i = 0; i < cfg.stft_channels.size(); ++i) {
    blocks_.emplace_back(params, fmt::format("{}.enc{}", name, i), prev, cfg.stft_channels[i], cfg.stft_downsample[i],
                         BlockStyle::LayerNormLeaky, rng);
    const auto s = block_stride(cfg.stft_downsample[i]);
    time_multiple_ *= s[0];
    freq_multiple_ *= s[1];
    prev = cfg.stft_channels[i];
  }
  head_ = Conv2dLayer<T>(params, name + ".head", prev, 1, 3, 3, nn::Conv2dSpec::same(3, 3), false, rng);
}

template <typename T>
nn::Var<T> StftDiscriminator<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& y) const {
  if (y.value().rank() != 2) throw nn::ShapeError("stft discriminator: expected [N, L], got " + nn::to_string(y.shape()));
  if (y.dim(1) < stft_.window_size)
    throw std::invalid_argument(fmt::format("stft discriminator: input of {} samples is shorter than the {}-sample window",
                                            y.dim(1), stft_.window_size));
  auto h = pad_to_multiple(nn::stft(y, stft_), time_multiple_, freq_multiple_);
  for (const auto& b : blocks_) h = b(tape, h);
  return head_(tape, h);
}

template <typename T>
WaveDiscriminator<T>::WaveDiscriminator(ParameterSet<T>& params, const std::string& name,
                                        const DiscriminatorConfig& cfg, Rng& rng) {
  int c = cfg.wave_base_channels;
  convs_.emplace_back(params, name + ".conv0", 1, c, 15, nn::Conv1dSpec{1, 7, 7, 1}, rng);
  norms_.emplace_back(params, name + ".norm0", c);
  for (int l = 0; l < cfg.wave_layers; ++l) {
    const int out = 2 * c;
    convs_.emplace_back(params, fmt::format("{}.down{}", name, l), c, out, 41, nn::Conv1dSpec{4, 20, 20, c / 4}, rng);
    norms_.emplace_back(params, fmt::format("{}.norm_down{}", name, l), out);
    total_stride_ *= 4;
    c = out;
  }
  convs_.emplace_back(params, name + ".post", c, c, 5, nn::Conv1dSpec{1, 2, 2, 1}, rng);
  norms_.emplace_back(params, name + ".norm_post", c);
  head_ = Conv1dLayer<T>(params, name + ".head", c, 1, 3, nn::Conv1dSpec{1, 1, 1, 1}, rng);
}

template <typename T>
nn::Var<T> WaveDiscriminator<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& y) const {
  if (y.value().rank() != 2) throw nn::ShapeError("wave discriminator: expected [N, L], got " + nn::to_string(y.shape()));
  if (y.dim(1) < total_stride_)
    throw std::invalid_argument(fmt::format("wave discriminator: input of {} samples is shorter than the total stride {}",
                                            y.dim(1), total_stride_));
  auto h = nn::reshape(y, {y.dim(0), 1, y.dim(1)});
  for (std::size_t i = 0; i < convs_.size(); ++i) h = nn::leaky_relu(norms_[i](tape, convs_[i](tape, h)), T(0.3));
  h = head_(tape, h);
  return nn::reshape(h, {h.dim(0), h.dim(2)});
}

template <typename T>
DiscriminatorSet<T>::DiscriminatorSet(const DiscriminatorConfig& cfg, const GeneratorConfig& gen, std::uint64_t seed)
    : cfg_(cfg), params_(std::make_unique<ParameterSet<T>>()) {
  cfg_.validate();
  Rng rng(seed);
  for (int k = 0; k < gen.scales; ++k) {
    stft_.emplace_back(*params_, fmt::format("d{}.stft", k), cfg_, gen.stft_config(), rng);
    wave_.emplace_back(*params_, fmt::format("d{}.wave", k), cfg_, rng);
  }
}

template class StftDiscriminator<float>;
template class StftDiscriminator<double>;
template class WaveDiscriminator<float>;
template class WaveDiscriminator<double>;
template class DiscriminatorSet<float>;
template class DiscriminatorSet<double>;

}  // namespace restorer::model
