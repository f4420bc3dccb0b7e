#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tarnet {

/// xoshiro256** generator. All randomness in the project flows from one
/// master seed through named streams (see Rng::stream), so individual
/// components stay reproducible in isolation.
class Rng {
 public:
  Rng() : Rng(0x9e3779b97f4a7c15ULL) {}
  explicit Rng(uint64_t seed);

  /// Derive an independent stream from a master seed and a stream name
  /// ("data", "init", "train", "ar", ...).
  static Rng stream(uint64_t master_seed, std::string_view name);

  uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), n >= 1.
  uint64_t uniform_int(uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// State serialization for bit-exact checkpoint resume.
  std::string state_hex() const;
  void restore_hex(const std::string& hex);

 private:
  uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 step, used for seeding and stream derivation.
uint64_t splitmix64(uint64_t& state);

}  // namespace tarnet
