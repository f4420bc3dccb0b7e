#pragma once

#include <map>
#include <string>

#include "tarnet/encoder.hpp"
#include "tarnet/frontend.hpp"
#include "tarnet/pooling.hpp"

namespace tarnet {

struct ModelConfig {
  int num_mels = 80;
  EncoderConfig encoder;
  PoolKind pooling = PoolKind::kAttentiveStats;
  int attention_hidden = 128;
  int embedding = 192;
  int num_speakers = 10;
};

/// Full pipeline: bottleneck projection -> multi-scale encoder -> fusion ->
/// pooling -> embedding -> ReLU -> linear classifier. Softmax lives in the
/// loss, so forward() returns raw logits.
class TarnetModel {
 public:
  TarnetModel() = default;
  TarnetModel(const ModelConfig& cfg, Rng& rng);

  Tensor forward(Tape& tape, const SpectrogramFeatures& x) const;
  /// Speaker embedding (the linear projection of the pooled vector).
  Tensor embedding(Tape& tape, const SpectrogramFeatures& x) const;

  /// All trainable tensors in a stable order.
  ParamList parameters() const;
  int64_t count_params() const;

  const ModelConfig& config() const { return cfg_; }

  void copy_parameters_from(const TarnetModel& other);
  void zero_grads() const;

  /// gLN instrumentation (receptive-field probes, gradcheck negative control).
  void set_stats_mode(GlobalLayerNorm::StatsMode mode);
  void set_gln_backward_corruption(bool corrupt);

  Conv1x1 bottleneck;
  MultiScaleEncoder encoder;
  Conv1x1 fusion;
  AttentionNet attention;  // present only for asp pooling
  Linear embed;
  Linear classifier;

 private:
  ModelConfig cfg_;
};

/// Closed-form parameter count for a config; must agree with
/// TarnetModel::count_params (two independent routes).
int64_t expected_param_count(const ModelConfig& cfg);

/// Per-layer shape/count table for `inspect`.
std::string model_summary(const TarnetModel& model, const FrontendConfig& fe);

/// Configs from a coarse (C, D, H, E) grid whose parameter count lands
/// within `tolerance` (relative) of `target`. Formatted one per line.
std::string search_param_grid(const ModelConfig& base, double target,
                              double tolerance);

// Checkpoint file: magic "TARNET1", plain-text manifest (meta lines, then
// tensor name/shape/offset lines), then raw little-endian f64 arrays.
// Round-trips bit-exactly.

void save_checkpoint(const std::string& path, const TarnetModel& model,
                     const std::map<std::string, std::string>& meta);

struct LoadedCheckpoint {
  TarnetModel model;
  std::map<std::string, std::string> meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Model architecture <-> checkpoint meta keys ("cfg.*").
std::map<std::string, std::string> model_config_to_meta(const ModelConfig& cfg);
ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta);

}  // namespace tarnet
