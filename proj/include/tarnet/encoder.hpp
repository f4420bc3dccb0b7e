#pragma once

#include <vector>

#include "tarnet/blocks.hpp"

namespace tarnet {

/// Architecture of the multi-scale temporal encoder. A stage with an empty
/// dilation list is the identity map (single-stage ablations).
struct EncoderConfig {
  int bottleneck = 64;  // C
  int hidden = 128;     // H
  int kernel = 3;       // K
  std::vector<int> dilations_short{1, 2};
  std::vector<int> dilations_mid{4, 8};
  std::vector<int> dilations_long{16, 32};
  int repeats = 3;  // R
  int fused = 128;  // D

  int produced_stages() const {
    return (dilations_short.empty() ? 0 : 1) + (dilations_mid.empty() ? 0 : 1) +
           (dilations_long.empty() ? 0 : 1);
  }
};

/// 1 + (K-1) * R * sum of all dilations across the three stages.
int receptive_field(const EncoderConfig& cfg);

/// Outputs of the three cascaded stages, all {C,T}. Stages left empty pass
/// their input through, so x_m == x_s when the mid stage is ablated.
struct StageOutputs {
  Tensor x_short;
  Tensor x_mid;
  Tensor x_long;
};

class MultiScaleEncoder {
 public:
  MultiScaleEncoder() = default;
  MultiScaleEncoder(const EncoderConfig& cfg, Rng& rng);

  /// X_S = stage_S(X0); X_M = stage_M(X_S); X_L = stage_L(X_M).
  StageOutputs encode(Tape& tape, const Tensor& x0) const;

  /// Applies one stage's block sequence, the dilation ladder repeated R times.
  static Tensor run_stage(Tape& tape, const Tensor& x,
                          const std::vector<TcnBlock>& blocks);

  const EncoderConfig& config() const { return cfg_; }
  void collect_params(const std::string& prefix, ParamList& out) const;

  void set_stats_mode(GlobalLayerNorm::StatsMode mode);
  void set_gln_backward_corruption(bool corrupt);

  std::vector<TcnBlock> stage_short;
  std::vector<TcnBlock> stage_mid;
  std::vector<TcnBlock> stage_long;

 private:
  EncoderConfig cfg_;
};

/// Eq-style fusion: channel-concat of the produced stage outputs (S, M, L
/// order), 1x1 projection to D channels, ReLU. `proj` must map
/// produced_stages * C -> D.
Tensor fuse_stages(Tape& tape, const StageOutputs& s, const EncoderConfig& cfg,
                   const Conv1x1& proj);

}  // namespace tarnet
