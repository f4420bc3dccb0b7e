#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>

#include "tarnet/errors.hpp"
#include "tarnet/frontend.hpp"
#include "tarnet/rng.hpp"
#include "tarnet/wav.hpp"

using namespace tarnet;

namespace {

constexpr double kTau = 6.283185307179586476925;

// O(n^2) reference DFT.
std::vector<std::complex<double>> dft_naive(const std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      const double ang = -kTau * static_cast<double>(k * t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

Waveform sine(double freq, double seconds, int sr, double amp = 0.3) {
  Waveform w;
  w.sample_rate = sr;
  const int64_t n = static_cast<int64_t>(seconds * sr);
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    w.samples[static_cast<size_t>(i)] = amp * std::sin(kTau * freq * i / sr);
  return w;
}

}  // namespace

TEST_CASE("frontend: mel scale closed form") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) ==
        doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.177).epsilon(1e-5));
  CHECK(hz_to_mel(8000.0) ==
        doctest::Approx(2595.0 * std::log10(1.0 + 8000.0 / 700.0)).epsilon(1e-12));
  CHECK(hz_to_mel(8000.0) == doctest::Approx(2840.0).epsilon(1e-4));
  CHECK_THROWS_AS(hz_to_mel(-1.0), UsageError);

  // strictly increasing, inverse consistent
  double prev = -1.0;
  for (double f = 0.0; f <= 8000.0; f += 250.0) {
    const double m = hz_to_mel(f);
    CHECK(m > prev);
    CHECK(mel_to_hz(m) == doctest::Approx(f).epsilon(1e-9));
    prev = m;
  }
}

TEST_CASE("frontend: fft matches the direct DFT") {
  Rng rng(21);
  for (size_t n : {8u, 64u, 256u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.uniform(-1.0, 1.0), 0.0};
    auto want = dft_naive(x);
    auto got = x;
    fft_radix2(got);
    for (size_t k = 0; k < n; ++k) {
      CHECK(got[k].real() == doctest::Approx(want[k].real()).epsilon(1e-9));
      CHECK(got[k].imag() == doctest::Approx(want[k].imag()).epsilon(1e-9));
    }
  }
  std::vector<std::complex<double>> bad(12);
  CHECK_THROWS_AS(fft_radix2(bad), UsageError);
}

TEST_CASE("frontend: frame count formula") {
  FrontendConfig cfg;
  CHECK(cfg.window_samples() == 400);
  CHECK(cfg.hop_samples() == 160);
  CHECK(frame_count(32000, cfg) == 198);
  CHECK(frame_count(400, cfg) == 1);
  CHECK(frame_count(399, cfg) == 0);
}

TEST_CASE("frontend: silence maps to log of the floor") {
  FrontendConfig cfg;
  Waveform w;
  w.samples.assign(16000, 0.0);
  SpectrogramFeatures feats = log_mel(w, cfg);
  CHECK(feats.num_mels() == 80);
  const double want = std::log(1e-6);
  for (int64_t i = 0; i < feats.values.numel(); ++i)
    CHECK(feats.values.at(i) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("frontend: sine at a filter center peaks at that filter") {
  FrontendConfig cfg;
  const std::vector<double> centers = mel_center_frequencies(cfg);
  for (int m : {20, 40, 60}) {
    Waveform w = sine(centers[static_cast<size_t>(m)], 0.5, cfg.sample_rate);
    SpectrogramFeatures feats = log_mel(w, cfg);
    const int frames = feats.num_frames();
    int argmax = 0;
    double best = -1e100;
    for (int f = 0; f < feats.num_mels(); ++f) {
      double avg = 0.0;
      for (int t = 0; t < frames; ++t)
        avg += feats.values.at(static_cast<int64_t>(f) * frames + t);
      if (avg > best) {
        best = avg;
        argmax = f;
      }
    }
    CHECK(argmax == m);
  }
}

TEST_CASE("frontend: filterbank rows are nonnegative with positive mass") {
  FrontendConfig cfg;
  const int bins = cfg.fft_size / 2 + 1;
  const std::vector<double> fb = mel_filterbank(cfg);
  for (int m = 0; m < cfg.num_mels; ++m) {
    double sum = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double w = fb[static_cast<size_t>(m) * bins + k];
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum > 0.0);
  }
  // At most two triangles overlap any bin.
  for (int k = 0; k < bins; ++k) {
    double total = 0.0, top = 0.0;
    for (int m = 0; m < cfg.num_mels; ++m) {
      const double w = fb[static_cast<size_t>(m) * bins + k];
      total += w;
      top = std::max(top, w);
    }
    CHECK(total <= 2.0 * top + 1e-15);
  }
}

TEST_CASE("frontend: louder input never lowers a log-mel entry") {
  FrontendConfig cfg;
  Rng rng(31);
  Waveform w;
  w.samples.resize(8000);
  for (auto& s : w.samples) s = 0.2 * rng.uniform(-1.0, 1.0);
  Waveform loud = w;
  for (auto& s : loud.samples) s *= 2.0;
  SpectrogramFeatures a = log_mel(w, cfg);
  SpectrogramFeatures b = log_mel(loud, cfg);
  for (int64_t i = 0; i < a.values.numel(); ++i) CHECK(b.values.at(i) >= a.values.at(i));
}

TEST_CASE("frontend: deterministic output") {
  FrontendConfig cfg;
  Waveform w = sine(440.0, 0.3, cfg.sample_rate);
  SpectrogramFeatures a = log_mel(w, cfg);
  SpectrogramFeatures b = log_mel(w, cfg);
  for (int64_t i = 0; i < a.values.numel(); ++i) CHECK(a.values.at(i) == b.values.at(i));
}

TEST_CASE("frontend: input validation") {
  FrontendConfig cfg;
  Waveform w;
  w.samples.assign(100, 0.0);
  CHECK_THROWS_AS(log_mel(w, cfg), DataError);  // shorter than one window
  w.samples.assign(1000, 0.0);
  w.samples[3] = std::nan("");
  CHECK_THROWS_AS(log_mel(w, cfg), DataError);
  Waveform wrong_rate = sine(100.0, 0.2, 8000);
  CHECK_THROWS_AS(log_mel(wrong_rate, cfg), DataError);
}

TEST_CASE("wav: write/read round-trip within quantization") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tarnet_wav_test.wav").string();
  Waveform w = sine(217.0, 0.1, 16000, 0.7);
  write_wav(path, w);
  Waveform r = read_wav(path);
  REQUIRE(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 32768.0);
  fs::remove(path);
}

TEST_CASE("wav: rejects other encodings with a clear error") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tarnet_bad.wav").string();
  // Stereo 16-bit header.
  std::string bytes = "RIFF";
  bytes += std::string("\x28\x00\x00\x00", 4);
  bytes += "WAVEfmt ";
  bytes += std::string("\x10\x00\x00\x00", 4);
  bytes += std::string("\x01\x00\x02\x00", 4);  // PCM, 2 channels
  bytes += std::string("\x80\x3e\x00\x00", 4);  // 16000 Hz
  bytes += std::string("\x00\xfa\x00\x00", 4);
  bytes += std::string("\x04\x00\x10\x00", 4);  // block align, 16 bits
  bytes += "data";
  bytes += std::string("\x04\x00\x00\x00", 4);
  bytes += std::string(4, '\0');
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("mono"), DataError);
  fs::remove(path);
  CHECK_THROWS_AS(read_wav("/nonexistent/file.wav"), DataError);
}
