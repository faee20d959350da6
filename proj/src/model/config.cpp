#include "restorer/model/config.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace restorer::model {

std::string to_string(Downsample d) { return d == Downsample::Freq ? "freq" : "time_freq"; }

Downsample downsample_from_string(const std::string& s) {
  if (s == "freq") return Downsample::Freq;
  if (s == "time_freq") return Downsample::TimeFreq;
  throw std::invalid_argument("unknown downsample kind: " + s + " (expected freq or time_freq)");
}

dsp::StftConfig GeneratorConfig::stft_config() const {
  dsp::StftConfig c;
  c.window_size = window();
  c.hop_size = window() / 4;
  return c;
}

std::size_t GeneratorConfig::min_length() const {
  return static_cast<std::size_t>(window()) << (scales - 1);
}

void GeneratorConfig::validate() const {
  if (scales < 1) throw std::invalid_argument("generator: scales must be at least 1");
  if (base_window < 8 || (base_window & (base_window - 1)) != 0)
    throw std::invalid_argument(fmt::format("generator: base_window {} must be a power of two >= 8", base_window));
  if (window() < 16) throw std::invalid_argument("generator: too many scales for the base window");
  if (channels.empty()) throw std::invalid_argument("generator: channel schedule is empty");
  if (channels.size() != downsample.size())
    throw std::invalid_argument(fmt::format("generator: {} channel entries but {} downsample entries",
                                            channels.size(), downsample.size()));
  for (int c : channels)
    if (c < 1) throw std::invalid_argument("generator: channel counts must be positive");
}

void DiscriminatorConfig::validate() const {
  if (stft_channels.empty() || stft_channels.size() != stft_downsample.size())
    throw std::invalid_argument("discriminator: STFT schedules must be nonempty and of equal length");
  if (wave_base_channels < 4 || wave_base_channels % 4 != 0)
    throw std::invalid_argument("discriminator: wave_base_channels must be a positive multiple of 4");
  if (wave_layers < 1) throw std::invalid_argument("discriminator: wave_layers must be at least 1");
}

namespace {

nlohmann::json schedule_json(const std::vector<Downsample>& d) {
  auto arr = nlohmann::json::array();
  for (auto x : d) arr.push_back(to_string(x));
  return arr;
}

std::vector<Downsample> schedule_from(const nlohmann::json& j) {
  std::vector<Downsample> out;
  for (const auto& x : j) out.push_back(downsample_from_string(x.get<std::string>()));
  return out;
}

}  // namespace

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"scales", c.scales},
          {"base_window", c.base_window},
          {"channels", c.channels},
          {"downsample", schedule_json(c.downsample)},
          {"bypass_phase", c.bypass_phase},
          {"identity_init", c.identity_init}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.scales = j.value("scales", c.scales);
  c.base_window = j.value("base_window", c.base_window);
  if (j.contains("channels")) c.channels = j["channels"].get<std::vector<int>>();
  if (j.contains("downsample")) c.downsample = schedule_from(j["downsample"]);
  c.bypass_phase = j.value("bypass_phase", c.bypass_phase);
  c.identity_init = j.value("identity_init", c.identity_init);
  c.validate();
  return c;
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"stft_channels", c.stft_channels},
          {"stft_downsample", schedule_json(c.stft_downsample)},
          {"wave_base_channels", c.wave_base_channels},
          {"wave_layers", c.wave_layers}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  if (j.contains("stft_channels")) c.stft_channels = j["stft_channels"].get<std::vector<int>>();
  if (j.contains("stft_downsample")) c.stft_downsample = schedule_from(j["stft_downsample"]);
  c.wave_base_channels = j.value("wave_base_channels", c.wave_base_channels);
  c.wave_layers = j.value("wave_layers", c.wave_layers);
  c.validate();
  return c;
}

}  // namespace restorer::model
