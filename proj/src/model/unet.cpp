#include "restorer/model/unet.hpp"

#include <fmt/format.h>

namespace restorer::model {

std::array<int, 2> block_stride(Downsample d) {
  return d == Downsample::Freq ? std::array<int, 2>{1, 2} : std::array<int, 2>{2, 2};
}

std::array<int, 2> block_kernel(Downsample d) {
  return d == Downsample::Freq ? std::array<int, 2>{3, 4} : std::array<int, 2>{4, 4};
}

template <typename T>
EncoderBlock<T>::EncoderBlock(ParameterSet<T>& params, const std::string& name, int in, int out, Downsample d,
                              BlockStyle style, Rng& rng)
    : style_(style), stride_(block_stride(d)) {
  const bool wn = style == BlockStyle::WeightNormElu;
  const auto k = block_kernel(d);
  conv_a_ = Conv2dLayer<T>(params, name + ".conv_a", in, out, 3, 3, nn::Conv2dSpec::same(3, 3), wn, rng);
  if (!wn) norm_a_ = LayerNormLayer<T>(params, name + ".norm_a", out);
  conv_b_ = Conv2dLayer<T>(params, name + ".conv_b", out, out, k[0], k[1],
                           nn::Conv2dSpec::half(k[0], k[1], stride_[0], stride_[1]), wn, rng);
  if (!wn) norm_b_ = LayerNormLayer<T>(params, name + ".norm_b", out);
}

template <typename T>
nn::Var<T> EncoderBlock<T>::activate(nn::Tape<T>& tape, const nn::Var<T>& x, const LayerNormLayer<T>& norm) const {
  if (style_ == BlockStyle::WeightNormElu) return nn::elu(x);
  return nn::leaky_relu(norm(tape, x), T(0.3));
}

template <typename T>
nn::Var<T> EncoderBlock<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  if (x.value().rank() != 4) throw nn::ShapeError("encoder block: expected [N, C, T, F], got " + nn::to_string(x.shape()));
  for (int a = 0; a < 2; ++a)
    if (x.dim(2 + a) % stride_[a] != 0)
      throw nn::ShapeError(fmt::format("encoder block: axis {} size {} not divisible by stride {}", 2 + a,
                                       x.dim(2 + a), stride_[a]));
  auto h = activate(tape, conv_a_(tape, x), norm_a_);
  return activate(tape, conv_b_(tape, h), norm_b_);
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParameterSet<T>& params, const std::string& name, int in, int mid, int out,
                              Downsample d, bool linear_output, Rng& rng)
    : in_(in), stride_(block_stride(d)), linear_output_(linear_output) {
  const auto k = block_kernel(d);
  up_ = Conv2dLayer<T>(params, name + ".up", in, mid, k[0], k[1],
                       nn::Conv2dSpec::half(k[0], k[1], stride_[0], stride_[1]), true, rng, ConvKind::Transposed);
  conv_ = Conv2dLayer<T>(params, name + ".conv", mid, out, 3, 3, nn::Conv2dSpec::same(3, 3), true, rng);
  if (in != out) projection_.emplace(params, name + ".proj", in, out, 1, 1, nn::Conv2dSpec{}, true, rng);
}

template <typename T>
nn::Var<T> DecoderBlock<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x,
                                       const std::optional<nn::Var<T>>& skip) const {
  nn::Var<T> input = x;
  if (skip) {
    for (int a : {0, 2, 3})
      if (skip->dim(a) != x.dim(a))
        throw nn::ShapeError(fmt::format("decoder block: skip axis {} is {} but input has {}", a, skip->dim(a),
                                         x.dim(a)));
    input = nn::concat<T>({x, *skip}, 1);
  }
  if (input.dim(1) != in_)
    throw nn::ShapeError(fmt::format("decoder block: axis 1 has {} channels, expected {}", input.dim(1), in_));
  auto h = nn::elu(up_(tape, input));
  h = conv_(tape, h);
  if (!linear_output_) h = nn::elu(h);
  // A 1x1 projection commutes with nearest up-sampling, so project first.
  auto shortcut = projection_ ? (*projection_)(tape, input) : input;
  shortcut = nn::nearest_upsample(shortcut, stride_[0], stride_[1]);
  return nn::add(h, shortcut);
}

template <typename T>
UNet<T>::UNet(ParameterSet<T>& params, const std::string& name, int in_channels, const std::vector<int>& channels,
              const std::vector<Downsample>& downsample, Rng& rng) {
  if (channels.size() != downsample.size() || channels.empty())
    throw std::invalid_argument("unet: channel and downsample schedules must be nonempty and of equal length");
  const std::size_t blocks = channels.size();
  int prev = in_channels;
  for (std::size_t i = 0; i < blocks; ++i) {
    encoders_.emplace_back(params, fmt::format("{}.enc{}", name, i), prev, channels[i], downsample[i],
                           BlockStyle::WeightNormElu, rng);
    const auto s = block_stride(downsample[i]);
    time_multiple_ *= s[0];
    freq_multiple_ *= s[1];
    prev = channels[i];
  }
  for (std::size_t i = 0; i < blocks; ++i) {
    const int in = i + 1 == blocks ? channels[i] : 2 * channels[i];
    const int out = i == 0 ? in_channels : channels[i - 1];
    decoders_.emplace_back(params, fmt::format("{}.dec{}", name, i), in, channels[i], out, downsample[i], i == 0,
                           rng);
  }
}

template <typename T>
nn::Var<T> UNet<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  std::vector<nn::Var<T>> skips;
  nn::Var<T> h = x;
  for (const auto& enc : encoders_) {
    h = enc(tape, h);
    skips.push_back(h);
  }
  for (std::size_t i = decoders_.size(); i-- > 0;) {
    if (i + 1 == decoders_.size())
      h = decoders_[i](tape, h);
    else
      h = decoders_[i](tape, h, skips[i]);
  }
  return h;
}

template <typename T>
void UNet<T>::zero_output() {
  auto& last = decoders_.front();
  last.conv().zero_weights();
  last.conv().bias().value.fill(T(0));
  if (auto* p = last.projection()) {
    p->zero_weights();
    p->bias().value.fill(T(0));
  }
}

template <typename T>
nn::Var<T> pad_to_multiple(const nn::Var<T>& x, int time_multiple, int freq_multiple) {
  nn::Var<T> out = x;
  const std::array<int, 2> mult{time_multiple, freq_multiple};
  for (int a = 0; a < 2; ++a) {
    const auto n = out.dim(2 + a);
    const auto pad = (mult[a] - n % mult[a]) % mult[a];
    if (pad == 0) continue;
    if (pad >= n)
      throw nn::ShapeError(fmt::format("input too short: axis {} has {} entries, needs more than {} to pad", 2 + a,
                                       n, pad));
    out = nn::pad_reflect(out, 2 + a, 0, pad);
  }
  return out;
}

template class EncoderBlock<float>;
template class EncoderBlock<double>;
template class DecoderBlock<float>;
template class DecoderBlock<double>;
template class UNet<float>;
template class UNet<double>;
template nn::Var<float> pad_to_multiple(const nn::Var<float>&, int, int);
template nn::Var<double> pad_to_multiple(const nn::Var<double>&, int, int);

}  // namespace restorer::model
