#pragma once

#include <complex>
#include <vector>

#include "tarnet/tensor.hpp"
#include "tarnet/wav.hpp"

namespace tarnet {

struct FrontendConfig {
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 512;
  int num_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-6;

  int window_samples() const {
    return static_cast<int>(sample_rate * window_ms / 1000.0 + 0.5);
  }
  int hop_samples() const {
    return static_cast<int>(sample_rate * hop_ms / 1000.0 + 0.5);
  }
};

/// Log-Mel feature matrix, `values` has shape {num_mels, num_frames}.
struct SpectrogramFeatures {
  Tensor values;
  int num_mels() const { return static_cast<int>(values.rows()); }
  int num_frames() const { return static_cast<int>(values.cols()); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filterbank, row-major {num_mels, fft_size/2 + 1}, triangles
/// equally spaced on the mel scale between fmin and fmax, scaled so each
/// filter has unit area in Hz.
std::vector<double> mel_filterbank(const FrontendConfig& cfg);

/// Center frequencies (Hz) of each mel filter.
std::vector<double> mel_center_frequencies(const FrontendConfig& cfg);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& buf);

/// Number of analysis frames for a waveform of `samples` samples.
int frame_count(int64_t samples, const FrontendConfig& cfg);

/// Hann-windowed power STFT -> mel projection -> log(x + eps).
SpectrogramFeatures log_mel(const Waveform& w, const FrontendConfig& cfg);

}  // namespace tarnet
