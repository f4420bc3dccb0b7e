#pragma once

#include <string>

#include "tarnet/blocks.hpp"

namespace tarnet {

enum class PoolKind { kMax, kAvg, kStats, kAttentiveStats };

PoolKind parse_pool_kind(const std::string& name);
std::string pool_kind_name(PoolKind kind);

/// Length of the pooled vector for D fused channels: D for max/avg,
/// 2D for statistics-based pooling.
int pooled_dim(PoolKind kind, int fused_channels);

/// Two-layer 1x1 attention network over per-frame context vectors:
/// {3D,T} -> tanh -> {A,T} -> {D,T}, softmax over time afterwards. The
/// second layer starts at zero, so attention begins uniform and ASP begins
/// as plain statistics pooling.
struct AttentionNet {
  Conv1x1 conv1;  // 3D -> A
  Conv1x1 conv2;  // A -> D

  void collect_params(const std::string& prefix, ParamList& out) const;
};

AttentionNet make_attention_net(int fused_channels, int hidden, Rng& rng);

/// Variance clamp inside the pooled standard deviations; keeps the square
/// root away from negative round-off.
inline constexpr double kVarianceFloor = 1e-9;

/// Channel-dependent attention weights alpha {D,T}; every row sums to 1.
Tensor attention_weights(Tape& tape, const Tensor& z, const AttentionNet& net);

/// Weighted mean/std statistics for given weights: [mu_a || sigma_a] {2D}.
Tensor weighted_stats(Tape& tape, const Tensor& z, const Tensor& alpha);

/// Attentive statistics pooling of fused features {D,T} -> {2D}.
Tensor attentive_stats_pool(Tape& tape, const Tensor& z, const AttentionNet& net);

/// Pooling ablations: max / avg -> {D}, sp -> {2D}, asp -> {2D}
/// (asp requires `net`).
Tensor pool_variant(Tape& tape, const Tensor& z, PoolKind kind,
                    const AttentionNet* net = nullptr);

}  // namespace tarnet
