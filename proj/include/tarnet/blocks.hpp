#pragma once

#include "tarnet/params.hpp"
#include "tarnet/rng.hpp"
#include "tarnet/tensor.hpp"

namespace tarnet {

/// Pointwise 1x1 convolution: {C_in,T} -> {C_out,T}, one weight matrix
/// applied per frame plus a per-channel bias.
struct Conv1x1 {
  Tensor weight;  // {out, in}
  Tensor bias;    // {out}

  int64_t in_channels() const { return weight.cols(); }
  int64_t out_channels() const { return weight.rows(); }
  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamList& out) const;
};

Conv1x1 make_conv1x1(int in, int out, Rng& rng, bool zero_init = false);

/// Fully connected layer on vectors: {in} -> {out}.
struct Linear {
  Tensor weight;  // {out, in}
  Tensor bias;    // {out}

  Tensor forward(Tape& tape, const Tensor& v) const;
  void collect_params(const std::string& prefix, ParamList& out) const;
};

Linear make_linear(int in, int out, Rng& rng);

/// Depthwise dilated 1-D convolution, one odd-width filter per channel,
/// symmetric zero padding so the time extent is preserved.
struct DepthwiseDilatedConv {
  Tensor kernel;  // {C, K}
  Tensor bias;    // {C}
  int dilation = 1;

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamList& out) const;
};

DepthwiseDilatedConv make_depthwise(int channels, int kernel, int dilation, Rng& rng);

/// Per-channel parametric ReLU.
struct PRelu {
  Tensor slope;  // {C}

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamList& out) const;
};

PRelu make_prelu(int channels, double init = 0.25);

/// Global layer normalization: statistics over all C*T entries jointly,
/// per-channel affine output. `stats_mode` is measurement instrumentation:
/// kCapture records the statistics of the next pass, kFrozen reuses them as
/// constants (used to probe the convolutional receptive field, where live
/// global statistics would couple every frame to every other).
struct GlobalLayerNorm {
  enum class StatsMode { kLive, kCapture, kFrozen };

  Tensor gamma;  // {C}
  Tensor beta;   // {C}
  double epsilon = 1e-8;
  StatsMode stats_mode = StatsMode::kLive;
  bool corrupt_backward = false;  // gradcheck negative control
  mutable ops::FrozenStats saved_stats;

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamList& out) const;
};

GlobalLayerNorm make_gln(int channels, double epsilon = 1e-8);

/// Residual TCN block: 1x1 conv (C->H), PReLU, gLN, depthwise dilated conv,
/// PReLU, gLN, 1x1 conv (H->C), plus the identity skip. The closing conv is
/// zero-initialized so a fresh block is the identity map.
struct TcnBlock {
  Conv1x1 in_conv;
  PRelu act1;
  GlobalLayerNorm norm1;
  DepthwiseDilatedConv dd_conv;
  PRelu act2;
  GlobalLayerNorm norm2;
  Conv1x1 out_conv;
  int dilation = 1;

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamList& out) const;
  /// Frames an output position can see: 1 + (K-1)*dilation.
  int receptive_field() const;
};

TcnBlock make_tcn_block(int channels, int hidden, int kernel, int dilation, Rng& rng);

}  // namespace tarnet
