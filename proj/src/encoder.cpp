#include "tarnet/encoder.hpp"

#include <numeric>

#include "tarnet/errors.hpp"

namespace tarnet {

int receptive_field(const EncoderConfig& cfg) {
  int64_t total = 0;
  for (int d : cfg.dilations_short) total += d;
  for (int d : cfg.dilations_mid) total += d;
  for (int d : cfg.dilations_long) total += d;
  return static_cast<int>(1 + (cfg.kernel - 1) * cfg.repeats * total);
}

namespace {

std::vector<TcnBlock> build_stage(const EncoderConfig& cfg,
                                  const std::vector<int>& dilations, Rng& rng) {
  std::vector<TcnBlock> blocks;
  blocks.reserve(dilations.size() * static_cast<size_t>(cfg.repeats));
  // (B_{d2} o B_{d1})^R: the dilation ladder repeated R times, every block
  // with its own parameters.
  for (int r = 0; r < cfg.repeats; ++r)
    for (int d : dilations)
      blocks.push_back(make_tcn_block(cfg.bottleneck, cfg.hidden, cfg.kernel, d, rng));
  return blocks;
}

void stage_params(const std::string& prefix, const std::vector<TcnBlock>& blocks,
                  ParamList& out) {
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect_params(prefix + ".b" + std::to_string(i), out);
}

}  // namespace

MultiScaleEncoder::MultiScaleEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.repeats < 1) throw ConfigError("encoder repeats must be >= 1");
  if (cfg.produced_stages() == 0)
    throw ConfigError("encoder needs at least one non-empty dilation set");
  for (const auto* dils :
       {&cfg.dilations_short, &cfg.dilations_mid, &cfg.dilations_long})
    for (int d : *dils)
      if (d < 1) throw ConfigError("dilation factors must be >= 1");
  stage_short = build_stage(cfg, cfg.dilations_short, rng);
  stage_mid = build_stage(cfg, cfg.dilations_mid, rng);
  stage_long = build_stage(cfg, cfg.dilations_long, rng);
}

Tensor MultiScaleEncoder::run_stage(Tape& tape, const Tensor& x,
                                    const std::vector<TcnBlock>& blocks) {
  Tensor h = x;
  for (const auto& b : blocks) h = b.forward(tape, h);
  return h;
}

StageOutputs MultiScaleEncoder::encode(Tape& tape, const Tensor& x0) const {
  StageOutputs out;
  out.x_short = run_stage(tape, x0, stage_short);
  out.x_mid = run_stage(tape, out.x_short, stage_mid);
  out.x_long = run_stage(tape, out.x_mid, stage_long);
  return out;
}

void MultiScaleEncoder::collect_params(const std::string& prefix, ParamList& out) const {
  stage_params(prefix + ".stage_s", stage_short, out);
  stage_params(prefix + ".stage_m", stage_mid, out);
  stage_params(prefix + ".stage_l", stage_long, out);
}

void MultiScaleEncoder::set_stats_mode(GlobalLayerNorm::StatsMode mode) {
  for (auto* stage : {&stage_short, &stage_mid, &stage_long})
    for (auto& b : *stage) {
      b.norm1.stats_mode = mode;
      b.norm2.stats_mode = mode;
    }
}

void MultiScaleEncoder::set_gln_backward_corruption(bool corrupt) {
  for (auto* stage : {&stage_short, &stage_mid, &stage_long})
    for (auto& b : *stage) {
      b.norm1.corrupt_backward = corrupt;
      b.norm2.corrupt_backward = corrupt;
    }
}

Tensor fuse_stages(Tape& tape, const StageOutputs& s, const EncoderConfig& cfg,
                   const Conv1x1& proj) {
  std::vector<Tensor> parts;
  if (!cfg.dilations_short.empty()) parts.push_back(s.x_short);
  if (!cfg.dilations_mid.empty()) parts.push_back(s.x_mid);
  if (!cfg.dilations_long.empty()) parts.push_back(s.x_long);
  if (parts.empty()) throw ConfigError("fuse_stages: no produced stages");
  Tensor cat = parts.size() == 1 ? parts[0] : ops::concat(tape, parts, 0);
  if (cat.rows() != proj.in_channels())
    throw ConfigError("fuse_stages: projection expects " +
                      std::to_string(proj.in_channels()) + " channels, got " +
                      std::to_string(cat.rows()));
  return ops::relu(tape, proj.forward(tape, cat));
}

}  // namespace tarnet
