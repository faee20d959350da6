#include "restorer/model/generator.hpp"

#include <fmt/format.h>

namespace restorer::model {

template <typename T>
GeneratorScale<T>::GeneratorScale(ParameterSet<T>& params, const std::string& name, const GeneratorConfig& cfg,
                                  Rng& rng)
    : stft_(cfg.stft_config()),
      bypass_phase_(cfg.bypass_phase),
      unet_(params, name, cfg.input_channels(), cfg.channels, cfg.downsample, rng) {}

template <typename T>
std::size_t GeneratorScale<T>::min_length() const {
  return static_cast<std::size_t>(stft_.window_size);
}

template <typename T>
nn::Var<T> GeneratorScale<T>::residual_spectrum(nn::Tape<T>& tape, const nn::Var<T>& spec) const {
  const auto frames = spec.dim(2);
  const auto bins = spec.dim(3);
  nn::Var<T> image = bypass_phase_ ? nn::complex_modulus(spec) : spec;
  auto padded = pad_to_multiple(image, unet_.time_multiple(), unet_.freq_multiple());
  auto r = unet_(tape, padded);
  r = nn::slice(nn::slice(r, 2, 0, frames), 3, 0, bins);
  if (!bypass_phase_) return r;
  // The new modulus is kept nonnegative so the phase stays that of the input.
  auto delta = nn::sub(nn::relu(nn::add(image, r)), image);
  return nn::apply_phase(delta, spec);
}

template <typename T>
nn::Var<T> GeneratorScale<T>::enhance_spectrum(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  auto spec = nn::stft(x, stft_);
  return nn::add(spec, residual_spectrum(tape, spec));
}

template <typename T>
nn::Var<T> GeneratorScale<T>::operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  if (x.value().rank() != 2) throw nn::ShapeError("generator: expected [N, L], got " + nn::to_string(x.shape()));
  const auto length = x.dim(1);
  if (length < static_cast<std::int64_t>(min_length()))
    throw std::invalid_argument(
        fmt::format("generator: input of {} samples is shorter than the {}-sample STFT window", length, min_length()));
  auto spec = nn::stft(x, stft_);
  auto residual = nn::istft(residual_spectrum(tape, spec), stft_, length);
  return nn::add(x, residual);
}

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), params_(std::make_unique<ParameterSet<T>>()) {
  cfg_.validate();
  Rng rng(seed);
  for (int k = 0; k < cfg_.scales; ++k) scales_.emplace_back(*params_, fmt::format("g{}", k), cfg_, rng);
  if (cfg_.identity_init) zero_outputs();
}

template <typename T>
void Generator<T>::zero_outputs() {
  for (auto& s : scales_) s.unet().zero_output();
}

template <typename T>
MultiscaleOutput<T> Generator<T>::forward(nn::Tape<T>& tape, const nn::Var<T>& x) const {
  if (x.value().rank() != 2) throw nn::ShapeError("generator: expected [N, L], got " + nn::to_string(x.shape()));
  const int K = cfg_.scales;
  std::vector<std::int64_t> lengths{x.dim(1)};
  for (int k = 1; k < K; ++k) lengths.push_back(lengths.back() / 2);
  if (lengths.back() < static_cast<std::int64_t>(cfg_.window()))
    throw std::invalid_argument(fmt::format("generator: input of {} samples is too short for {} scales (minimum {})",
                                            x.dim(1), K, cfg_.min_length()));

  MultiscaleOutput<T> out;
  out.composites.resize(static_cast<std::size_t>(K));
  nn::Var<T> z = x;
  for (int k = K - 1; k >= 0; --k) {
    if (k == 0) {
      z = scales_[0](tape, z);
    } else {
      nn::Var<T> low = z;
      for (int j = 0; j < k; ++j) low = nn::downsample2(low);
      auto residual = nn::sub(scales_[static_cast<std::size_t>(k)](tape, low), low);
      for (int j = k; j-- > 0;) residual = nn::upsample2(residual, lengths[static_cast<std::size_t>(j)]);
      z = nn::add(z, residual);
    }
    out.composites[static_cast<std::size_t>(k)] = z;
  }
  out.output = z;
  return out;
}

template <typename T>
std::vector<T> Generator<T>::enhance(std::span<const T> x) const {
  nn::Tape<T> tape(false);
  auto in = tape.constant(nn::Tensor<T>(nn::Shape{1, static_cast<std::int64_t>(x.size())},
                                        std::vector<T>(x.begin(), x.end())));
  auto out = forward(tape, in).output;
  return out.value().storage();
}

template <typename T>
void Generator<T>::save(const std::filesystem::path& path, nlohmann::json extra) const {
  nn::Checkpoint ckpt;
  ckpt.header = std::move(extra);
  ckpt.header["kind"] = "generator";
  ckpt.header["generator"] = to_json(cfg_);
  params_->export_to(ckpt);
  nn::save_checkpoint(path, ckpt);
}

template <typename T>
void Generator<T>::load_weights(const nn::Checkpoint& ckpt, const std::string& prefix) {
  params_->import_from(ckpt, prefix);
}

template <typename T>
std::unique_ptr<Generator<T>> Generator<T>::load(const std::filesystem::path& path) {
  const auto ckpt = nn::load_checkpoint(path);
  if (!ckpt.header.contains("generator"))
    throw nn::CheckpointError(path.string() + ": header has no generator configuration");
  auto g = std::make_unique<Generator<T>>(generator_config_from_json(ckpt.header["generator"]), 0);
  g->load_weights(ckpt);
  return g;
}

template class GeneratorScale<float>;
template class GeneratorScale<double>;
template class Generator<float>;
template class Generator<double>;

}  // namespace restorer::model
