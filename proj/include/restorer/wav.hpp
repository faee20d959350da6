#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "restorer/audio.hpp"

namespace restorer {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WavEncoding { Pcm16, Pcm24, Float32 };

// Reads PCM 16/24-bit or IEEE float32 RIFF/WAVE files. Multichannel input is
// downmixed by averaging channels.
AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes);

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::Float32);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip,
                                     WavEncoding encoding = WavEncoding::Float32);

}  // namespace restorer
