#pragma once

#include <map>
#include <string>
#include <vector>

#include "tarnet/metrics.hpp"

namespace tarnet {

struct TrainConfig {
  double lr = 0.001;
  double weight_decay = 5e-4;
  double momentum = 0.0;
  int epochs = 300;
  int batch_size = 100;
  double crop_seconds = 2.0;
  uint64_t seed = 1234;
  int jobs = 1;  // worker replicas per batch; <= 0 means all hardware threads
  // Optional epoch-level stop once running train top-1 and val top-1 both
  // clear these thresholds (0 disables).
  double early_stop_train_top1 = 0.0;
  double early_stop_val_top1 = 0.0;
};

/// Mean cross-entropy over a batch of logit vectors (log-sum-exp inside).
Tensor batch_cross_entropy(Tape& tape, const std::vector<Tensor>& logits,
                           const std::vector<int>& labels);

/// One SGD update: p <- p - lr * (g + wd * p), weight decay as an L2
/// gradient term; biases and normalization parameters are exempt. With
/// momentum > 0, `velocity` carries one buffer per parameter.
void sgd_step(const ParamList& params, const TrainConfig& cfg,
              std::vector<std::vector<double>>* velocity, int64_t step_index);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> log;
  double best_val_top1 = 0.0;
  int64_t steps = 0;
};

/// Epoch loop: shuffled batches of random crops, per-epoch validation on
/// full-length utterances, best/last checkpointing and a CSV epoch log when
/// `out_dir` is non-empty. `resume_meta` (from a last.ckpt) continues an
/// interrupted run bit-exactly: same parameters, epoch index, and rng state.
TrainResult train_loop(TarnetModel& model, const Corpus& train_split,
                       const Corpus& val_split, const TrainConfig& cfg,
                       const FrontendConfig& fe, const std::string& out_dir,
                       const std::map<std::string, std::string>& run_meta = {},
                       const std::map<std::string, std::string>* resume_meta = nullptr,
                       std::ostream* progress = nullptr);

}  // namespace tarnet
