#include "tarnet/blocks.hpp"

#include <cmath>

#include "tarnet/errors.hpp"

namespace tarnet {

namespace {

Tensor uniform_init(std::vector<int64_t> shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

// Conv1x1 ------------------------------------------------------------------

Tensor Conv1x1::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.rows() != in_channels())
    throw ConfigError("Conv1x1: input has " + std::to_string(x.rank() == 2 ? x.rows() : -1) +
                      " channels, layer expects " + std::to_string(in_channels()));
  return ops::conv1x1(tape, weight, x, bias);
}

void Conv1x1::collect_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

Conv1x1 make_conv1x1(int in, int out, Rng& rng, bool zero_init) {
  Conv1x1 c;
  if (zero_init) {
    c.weight = Tensor::zeros({out, in}, true);
  } else {
    c.weight = uniform_init({out, in}, std::sqrt(1.0 / in), rng);
  }
  c.bias = Tensor::zeros({out}, true);
  return c;
}

// Linear --------------------------------------------------------------------

Tensor Linear::forward(Tape& tape, const Tensor& v) const {
  if (v.rank() != 1 || v.dim(0) != weight.cols())
    throw ConfigError("Linear: input length " +
                      std::to_string(v.rank() == 1 ? v.dim(0) : -1) +
                      " != layer width " + std::to_string(weight.cols()));
  return ops::add(tape, ops::matmul(tape, weight, v), bias);
}

void Linear::collect_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

Linear make_linear(int in, int out, Rng& rng) {
  Linear l;
  l.weight = uniform_init({out, in}, std::sqrt(1.0 / in), rng);
  l.bias = Tensor::zeros({out}, true);
  return l;
}

// DepthwiseDilatedConv ------------------------------------------------------

Tensor DepthwiseDilatedConv::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.rows() != kernel.rows())
    throw ConfigError("DepthwiseDilatedConv: input has " +
                      std::to_string(x.rank() == 2 ? x.rows() : -1) +
                      " channels, layer has " + std::to_string(kernel.rows()));
  return ops::depthwise_conv(tape, x, kernel, bias, dilation);
}

void DepthwiseDilatedConv::collect_params(const std::string& prefix,
                                          ParamList& out) const {
  out.push_back({prefix + ".kernel", kernel, true});
  out.push_back({prefix + ".bias", bias, false});
}

DepthwiseDilatedConv make_depthwise(int channels, int kernel, int dilation, Rng& rng) {
  if (kernel % 2 == 0) throw ConfigError("depthwise kernel width must be odd");
  DepthwiseDilatedConv d;
  d.kernel = uniform_init({channels, kernel}, std::sqrt(1.0 / kernel), rng);
  d.bias = Tensor::zeros({channels}, true);
  d.dilation = dilation;
  return d;
}

// PRelu ----------------------------------------------------------------------

Tensor PRelu::forward(Tape& tape, const Tensor& x) const {
  return ops::prelu(tape, x, slope);
}

void PRelu::collect_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".slope", slope, true});
}

PRelu make_prelu(int channels, double init) {
  PRelu p;
  p.slope = Tensor::full({channels}, init, true);
  return p;
}

// GlobalLayerNorm -------------------------------------------------------------

Tensor GlobalLayerNorm::forward(Tape& tape, const Tensor& x) const {
  const ops::FrozenStats* frozen =
      stats_mode == StatsMode::kFrozen ? &saved_stats : nullptr;
  ops::FrozenStats* capture =
      stats_mode == StatsMode::kCapture ? &saved_stats : nullptr;
  Tensor norm = ops::gln_norm(tape, x, epsilon, frozen, capture, corrupt_backward);
  return ops::row_add(tape, ops::row_mul(tape, norm, gamma), beta);
}

void GlobalLayerNorm::collect_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma, false});
  out.push_back({prefix + ".beta", beta, false});
}

GlobalLayerNorm make_gln(int channels, double epsilon) {
  GlobalLayerNorm g;
  g.gamma = Tensor::full({channels}, 1.0, true);
  g.beta = Tensor::zeros({channels}, true);
  g.epsilon = epsilon;
  return g;
}

// TcnBlock ---------------------------------------------------------------------

Tensor TcnBlock::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.rows() != in_conv.in_channels())
    throw ConfigError("TcnBlock: input width " +
                      std::to_string(x.rank() == 2 ? x.rows() : -1) +
                      " != block width " + std::to_string(in_conv.in_channels()));
  Tensor h = in_conv.forward(tape, x);
  h = act1.forward(tape, h);
  h = norm1.forward(tape, h);
  h = dd_conv.forward(tape, h);
  h = act2.forward(tape, h);
  h = norm2.forward(tape, h);
  h = out_conv.forward(tape, h);
  return ops::add(tape, x, h);
}

void TcnBlock::collect_params(const std::string& prefix, ParamList& out) const {
  in_conv.collect_params(prefix + ".in_conv", out);
  act1.collect_params(prefix + ".act1", out);
  norm1.collect_params(prefix + ".norm1", out);
  dd_conv.collect_params(prefix + ".dd_conv", out);
  act2.collect_params(prefix + ".act2", out);
  norm2.collect_params(prefix + ".norm2", out);
  out_conv.collect_params(prefix + ".out_conv", out);
}

int TcnBlock::receptive_field() const {
  return 1 + (static_cast<int>(dd_conv.kernel.cols()) - 1) * dilation;
}

TcnBlock make_tcn_block(int channels, int hidden, int kernel, int dilation, Rng& rng) {
  TcnBlock b;
  b.in_conv = make_conv1x1(channels, hidden, rng);
  b.act1 = make_prelu(hidden);
  b.norm1 = make_gln(hidden);
  b.dd_conv = make_depthwise(hidden, kernel, dilation, rng);
  b.act2 = make_prelu(hidden);
  b.norm2 = make_gln(hidden);
  b.out_conv = make_conv1x1(hidden, channels, rng, /*zero_init=*/true);
  b.dilation = dilation;
  return b;
}

}  // namespace tarnet
