#pragma once

#include <map>
#include <string>

#include "tarnet/data.hpp"
#include "tarnet/frontend.hpp"
#include "tarnet/model.hpp"
#include "tarnet/train.hpp"

namespace tarnet {

/// Everything a run needs, loaded from a key = value config file with
/// [frontend] [encoder] [pooling] [train] [data] sections plus command-line
/// overrides. Unknown sections or keys are rejected. The effective config is
/// dumped verbatim into every output directory and checkpoint.
struct RunConfig {
  FrontendConfig frontend;
  EncoderConfig encoder;
  PoolKind pooling = PoolKind::kAttentiveStats;
  int attention_hidden = 128;
  int embedding = 192;
  TrainConfig train;

  struct DataConfig {
    uint64_t seed = 99;
    int speakers = 10;
    int utterances_per_speaker = 50;
    double duration_seconds = 2.0;
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
  } data;

  static RunConfig from_file(const std::string& path);
  /// Applies one "section.key=value" override.
  void apply_override(const std::string& spec);

  /// Full INI rendering of the effective config.
  std::string dump() const;
  /// Flat "run.<section>.<key>" map for checkpoint provenance.
  std::map<std::string, std::string> as_meta() const;

  ModelConfig model_config(int num_speakers) const;
  SplitSpec split_spec() const;
};

}  // namespace tarnet
