#pragma once

#include <string>
#include <vector>

namespace multifuse {

// Mono sample buffer, amplitudes roughly in [-1, 1].
struct AudioSignal {
  std::vector<double> samples;
  int sample_rate = 0;
};

namespace wav {

// Reads a RIFF/WAVE file: PCM 16-bit signed LE (format 1) or 32-bit float
// (format 3), mono or stereo. Stereo is averaged down to mono. The sample
// rate comes straight from the header; no resampling.
AudioSignal read(const std::string& path);

// Minimal writer (PCM 16-bit mono), used by the CLI demos and tests.
void write_pcm16(const std::string& path, const AudioSignal& signal);

}  // namespace wav

}  // namespace multifuse
