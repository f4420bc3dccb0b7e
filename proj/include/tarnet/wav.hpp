#pragma once

#include <string>
#include <vector>

namespace tarnet {

/// Mono waveform with samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF WAV file. Only 16-bit PCM mono is accepted; anything else
/// is rejected with a DataError naming the offending field.
Waveform read_wav(const std::string& path);

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1] before quantizing.
void write_wav(const std::string& path, const Waveform& w);

}  // namespace tarnet
