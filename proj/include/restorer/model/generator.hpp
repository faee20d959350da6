#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "restorer/model/config.hpp"
#include "restorer/model/unet.hpp"

namespace restorer::model {

// One residual STFT-domain generator: out = in + istft(UNet(stft(in))).
template <typename T>
class GeneratorScale {
 public:
  GeneratorScale(ParameterSet<T>& params, const std::string& name, const GeneratorConfig& cfg, Rng& rng);

  /// x [N, L] -> [N, L].
  nn::Var<T> operator()(nn::Tape<T>& tape, const nn::Var<T>& x) const;
  /// Enhanced spectrum [N, 2, frames, bins] for x [N, L], before the inverse STFT.
  nn::Var<T> enhance_spectrum(nn::Tape<T>& tape, const nn::Var<T>& x) const;

  const dsp::StftConfig& stft_config() const { return stft_; }
  std::size_t min_length() const;
  UNet<T>& unet() { return unet_; }

 private:
  nn::Var<T> residual_spectrum(nn::Tape<T>& tape, const nn::Var<T>& spec) const;

  dsp::StftConfig stft_;
  bool bypass_phase_;
  UNet<T> unet_;
};

template <typename T>
struct MultiscaleOutput {
  nn::Var<T> output;
  // Full-rate composite after scales k..K-1, for k = 0..K-1; entry 0 is `output`.
  std::vector<nn::Var<T>> composites;
};

// Stack G_0 .. G_{K-1}; G_k runs at sample rate / 2^k and G_{K-1} runs first.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  int scales() const { return cfg_.scales; }
  GeneratorScale<T>& scale(int k) { return scales_[static_cast<std::size_t>(k)]; }
  ParameterSet<T>& parameters() { return *params_; }
  const ParameterSet<T>& parameters() const { return *params_; }

  /// x [N, L] at full rate.
  MultiscaleOutput<T> forward(nn::Tape<T>& tape, const nn::Var<T>& x) const;
  /// Inference on one signal without recording a graph.
  std::vector<T> enhance(std::span<const T> x) const;

  /// Makes every scale the identity map.
  void zero_outputs();

  void save(const std::filesystem::path& path, nlohmann::json extra = nlohmann::json::object()) const;
  /// Rebuilds the architecture from the checkpoint header and loads its weights.
  static std::unique_ptr<Generator> load(const std::filesystem::path& path);
  void load_weights(const nn::Checkpoint& ckpt, const std::string& prefix = "");

 private:
  GeneratorConfig cfg_;
  std::unique_ptr<ParameterSet<T>> params_;
  std::vector<GeneratorScale<T>> scales_;
};

}  // namespace restorer::model
