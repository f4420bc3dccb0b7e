#include "tarnet/pooling.hpp"

#include "tarnet/errors.hpp"

namespace tarnet {

PoolKind parse_pool_kind(const std::string& name) {
  if (name == "max") return PoolKind::kMax;
  if (name == "avg") return PoolKind::kAvg;
  if (name == "sp") return PoolKind::kStats;
  if (name == "asp") return PoolKind::kAttentiveStats;
  throw UsageError("unknown pooling kind '" + name + "' (max|avg|sp|asp)");
}

std::string pool_kind_name(PoolKind kind) {
  switch (kind) {
    case PoolKind::kMax: return "max";
    case PoolKind::kAvg: return "avg";
    case PoolKind::kStats: return "sp";
    case PoolKind::kAttentiveStats: return "asp";
  }
  throw UsageError("invalid pooling kind");
}

int pooled_dim(PoolKind kind, int fused_channels) {
  return (kind == PoolKind::kMax || kind == PoolKind::kAvg) ? fused_channels
                                                            : 2 * fused_channels;
}

void AttentionNet::collect_params(const std::string& prefix, ParamList& out) const {
  conv1.collect_params(prefix + ".conv1", out);
  conv2.collect_params(prefix + ".conv2", out);
}

AttentionNet make_attention_net(int fused_channels, int hidden, Rng& rng) {
  AttentionNet net;
  net.conv1 = make_conv1x1(3 * fused_channels, hidden, rng);
  net.conv2 = make_conv1x1(hidden, fused_channels, rng, /*zero_init=*/true);
  return net;
}

namespace {

/// Global mean and (clamped) std over time, both {D}.
std::pair<Tensor, Tensor> global_stats(Tape& tape, const Tensor& z) {
  Tensor mean = ops::mean_cols(tape, z);
  Tensor second = ops::mean_cols(tape, ops::mul(tape, z, z));
  Tensor var = ops::sub(tape, second, ops::mul(tape, mean, mean));
  Tensor std = ops::sqrt(tape, ops::clamp_min(tape, var, kVarianceFloor));
  return {mean, std};
}

}  // namespace

Tensor attention_weights(Tape& tape, const Tensor& z, const AttentionNet& net) {
  if (z.rank() != 2) throw ConfigError("attention_weights: expected {D,T} features");
  const int64_t frames = z.cols();
  auto [mean, std] = global_stats(tape, z);
  // Context vector per frame: frame feature with the utterance mean and std.
  Tensor context = ops::concat(
      tape, {z, ops::tile_cols(tape, mean, frames), ops::tile_cols(tape, std, frames)}, 0);
  Tensor hidden = ops::tanh(tape, net.conv1.forward(tape, context));
  Tensor scores = net.conv2.forward(tape, hidden);
  return ops::softmax_cols(tape, scores);
}

Tensor weighted_stats(Tape& tape, const Tensor& z, const Tensor& alpha) {
  if (z.shape() != alpha.shape())
    throw ConfigError("weighted_stats: features and weights differ in shape");
  Tensor mean = ops::sum_cols(tape, ops::mul(tape, alpha, z));
  Tensor second = ops::sum_cols(tape, ops::mul(tape, alpha, ops::mul(tape, z, z)));
  Tensor var = ops::sub(tape, second, ops::mul(tape, mean, mean));
  Tensor std = ops::sqrt(tape, ops::clamp_min(tape, var, kVarianceFloor));
  return ops::concat(tape, {mean, std}, 0);
}

Tensor attentive_stats_pool(Tape& tape, const Tensor& z, const AttentionNet& net) {
  if (z.cols() < 1) throw DataError("attentive_stats_pool: no frames");
  Tensor alpha = attention_weights(tape, z, net);
  return weighted_stats(tape, z, alpha);
}

Tensor pool_variant(Tape& tape, const Tensor& z, PoolKind kind,
                    const AttentionNet* net) {
  if (z.rank() != 2 || z.cols() < 1)
    throw DataError("pool_variant: expected {D,T} features with T >= 1");
  switch (kind) {
    case PoolKind::kMax:
      return ops::amax_cols(tape, z);
    case PoolKind::kAvg:
      return ops::mean_cols(tape, z);
    case PoolKind::kStats: {
      auto [mean, std] = global_stats(tape, z);
      return ops::concat(tape, {mean, std}, 0);
    }
    case PoolKind::kAttentiveStats:
      if (!net) throw UsageError("pool_variant: asp requires an attention net");
      return attentive_stats_pool(tape, z, *net);
  }
  throw UsageError("pool_variant: invalid kind");
}

}  // namespace tarnet
