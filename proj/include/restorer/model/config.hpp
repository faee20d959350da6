#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "restorer/dsp.hpp"

namespace restorer::model {

enum class Downsample { Freq, TimeFreq };

std::string to_string(Downsample d);
Downsample downsample_from_string(const std::string& s);

struct GeneratorConfig {
  int scales = 2;
  // STFT window of a single-scale model; every scale of a K-scale stack uses
  // base_window / 2^(K-1) with hop = window / 4.
  int base_window = 2048;
  std::vector<int> channels{16, 32, 64, 64};
  std::vector<Downsample> downsample{Downsample::Freq, Downsample::TimeFreq, Downsample::TimeFreq, Downsample::Freq};
  // Feed only the STFT modulus and reuse the input phase.
  bool bypass_phase = false;
  // Start with zero output layers so every scale is the identity.
  bool identity_init = true;

  int window() const { return base_window >> (scales - 1); }
  dsp::StftConfig stft_config() const;
  int input_channels() const { return bypass_phase ? 1 : 2; }
  /// Smallest full-rate input length the stack accepts.
  std::size_t min_length() const;
  void validate() const;
};

struct DiscriminatorConfig {
  std::vector<int> stft_channels{16, 32, 64, 64};
  std::vector<Downsample> stft_downsample{Downsample::Freq, Downsample::TimeFreq, Downsample::TimeFreq,
                                          Downsample::Freq};
  int wave_base_channels = 8;
  int wave_layers = 4;  // strided layers, each x2 channels and /4 time

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

}  // namespace restorer::model
