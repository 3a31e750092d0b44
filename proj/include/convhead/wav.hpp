#pragma once

#include "convhead/types.hpp"

#include <string>
#include <vector>

namespace convhead {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;
};

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.
/// Multi-channel input is averaged down to mono.
AudioClip read_wav(const std::string& path);

/// Minimal 16-bit PCM writer, mostly for tests and tooling round trips.
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace convhead
