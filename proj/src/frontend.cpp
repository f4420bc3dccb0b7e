#include "tarnet/frontend.hpp"

#include <algorithm>
#include <cmath>

#include "tarnet/errors.hpp"

namespace tarnet {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double hz_to_mel(double hz) {
  if (hz < 0.0) throw UsageError("hz_to_mel: frequency must be nonnegative");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> mel_center_frequencies(const FrontendConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(cfg.num_mels);
  for (int m = 0; m < cfg.num_mels; ++m) {
    const double mel = mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.num_mels + 1);
    centers[m] = mel_to_hz(mel);
  }
  return centers;
}

std::vector<double> mel_filterbank(const FrontendConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.num_mels + 2);
  for (int m = 0; m < cfg.num_mels + 2; ++m)
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.num_mels + 1));

  std::vector<double> fb(static_cast<size_t>(cfg.num_mels) * bins, 0.0);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  for (int m = 0; m < cfg.num_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);  // unit triangle area
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb[static_cast<size_t>(m) * bins + k] = w * norm;
    }
  }
  return fb;
}

void fft_radix2(std::vector<std::complex<double>>& buf) {
  const size_t n = buf.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw UsageError("fft_radix2: size must be a power of two, got " +
                     std::to_string(n));
  // Bit reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = buf[i + k];
        const std::complex<double> v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

int frame_count(int64_t samples, const FrontendConfig& cfg) {
  const int win = cfg.window_samples();
  if (samples < win) return 0;
  return 1 + static_cast<int>((samples - win) / cfg.hop_samples());
}

SpectrogramFeatures log_mel(const Waveform& w, const FrontendConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate)
    throw DataError("log_mel: waveform sample rate " +
                    std::to_string(w.sample_rate) + " != configured " +
                    std::to_string(cfg.sample_rate));
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (cfg.fft_size < win)
    throw ConfigError("log_mel: fft_size must be >= window length");
  const int frames = frame_count(static_cast<int64_t>(w.samples.size()), cfg);
  if (frames < 1)
    throw DataError("log_mel: waveform too short (" +
                    std::to_string(w.samples.size()) + " samples, window " +
                    std::to_string(win) + ")");
  for (double s : w.samples)
    if (!std::isfinite(s)) throw DataError("log_mel: waveform contains non-finite samples");

  // Periodic Hann window.
  std::vector<double> hann(win);
  for (int i = 0; i < win; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win);

  const int bins = cfg.fft_size / 2 + 1;
  const std::vector<double> fb = mel_filterbank(cfg);

  Tensor out = Tensor::zeros({cfg.num_mels, frames});
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.fft_size));
  std::vector<double> power(static_cast<size_t>(bins));
  for (int t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + static_cast<int64_t>(t) * hop;
    for (int i = 0; i < win; ++i) buf[i] = {src[i] * hann[i], 0.0};
    for (int i = win; i < cfg.fft_size; ++i) buf[i] = {0.0, 0.0};
    fft_radix2(buf);
    for (int k = 0; k < bins; ++k) power[k] = std::norm(buf[k]);
    for (int m = 0; m < cfg.num_mels; ++m) {
      const double* row = fb.data() + static_cast<size_t>(m) * bins;
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) acc += row[k] * power[k];
      out.data()[static_cast<int64_t>(m) * frames + t] = std::log(acc + cfg.log_floor);
    }
  }
  return SpectrogramFeatures{out};
}

}  // namespace tarnet
