#include "tarnet/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tarnet/errors.hpp"

namespace tarnet {

TarnetModel::TarnetModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const auto& e = cfg.encoder;
  if (cfg.num_mels < 1 || e.bottleneck < 1 || e.hidden < 1 || e.fused < 1 ||
      cfg.embedding < 1 || cfg.num_speakers < 2)
    throw ConfigError("model widths must be positive and num_speakers >= 2");
  bottleneck = make_conv1x1(cfg.num_mels, e.bottleneck, rng);
  encoder = MultiScaleEncoder(e, rng);
  fusion = make_conv1x1(e.produced_stages() * e.bottleneck, e.fused, rng);
  if (cfg.pooling == PoolKind::kAttentiveStats)
    attention = make_attention_net(e.fused, cfg.attention_hidden, rng);
  embed = make_linear(pooled_dim(cfg.pooling, e.fused), cfg.embedding, rng);
  classifier = make_linear(cfg.embedding, cfg.num_speakers, rng);
}

Tensor TarnetModel::embedding(Tape& tape, const SpectrogramFeatures& x) const {
  if (x.num_mels() != cfg_.num_mels)
    throw ConfigError("forward: features have " + std::to_string(x.num_mels()) +
                      " mel bands, model expects " + std::to_string(cfg_.num_mels));
  Tensor x0 = bottleneck.forward(tape, x.values);
  StageOutputs stages = encoder.encode(tape, x0);
  Tensor fused = fuse_stages(tape, stages, cfg_.encoder, fusion);
  const AttentionNet* net =
      cfg_.pooling == PoolKind::kAttentiveStats ? &attention : nullptr;
  Tensor pooled = pool_variant(tape, fused, cfg_.pooling, net);
  return embed.forward(tape, pooled);
}

Tensor TarnetModel::forward(Tape& tape, const SpectrogramFeatures& x) const {
  Tensor emb = embedding(tape, x);
  return classifier.forward(tape, ops::relu(tape, emb));
}

ParamList TarnetModel::parameters() const {
  ParamList out;
  bottleneck.collect_params("bottleneck", out);
  encoder.collect_params("encoder", out);
  fusion.collect_params("fusion", out);
  if (cfg_.pooling == PoolKind::kAttentiveStats)
    attention.collect_params("attention", out);
  embed.collect_params("embed", out);
  classifier.collect_params("classifier", out);
  return out;
}

int64_t TarnetModel::count_params() const {
  int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

void TarnetModel::copy_parameters_from(const TarnetModel& other) {
  ParamList mine = parameters();
  ParamList theirs = other.parameters();
  if (mine.size() != theirs.size())
    throw UsageError("copy_parameters_from: parameter lists differ");
  for (size_t i = 0; i < mine.size(); ++i)
    mine[i].tensor.copy_data_from(theirs[i].tensor);
}

void TarnetModel::zero_grads() const {
  for (const auto& p : parameters()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void TarnetModel::set_stats_mode(GlobalLayerNorm::StatsMode mode) {
  encoder.set_stats_mode(mode);
}

void TarnetModel::set_gln_backward_corruption(bool corrupt) {
  encoder.set_gln_backward_corruption(corrupt);
}

int64_t expected_param_count(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  const int64_t c = e.bottleneck, h = e.hidden, k = e.kernel, d = e.fused;
  auto conv1x1 = [](int64_t in, int64_t out) { return out * in + out; };
  // in_conv + PReLU + gLN + dd_conv + PReLU + gLN + out_conv
  const int64_t per_block = conv1x1(c, h) + h + 2 * h + (h * k + h) + h + 2 * h +
                            conv1x1(h, c);
  const int64_t blocks =
      static_cast<int64_t>(e.repeats) *
      static_cast<int64_t>(e.dilations_short.size() + e.dilations_mid.size() +
                           e.dilations_long.size());
  int64_t total = conv1x1(cfg.num_mels, c);
  total += blocks * per_block;
  total += conv1x1(static_cast<int64_t>(e.produced_stages()) * c, d);
  if (cfg.pooling == PoolKind::kAttentiveStats)
    total += conv1x1(3 * d, cfg.attention_hidden) + conv1x1(cfg.attention_hidden, d);
  total += conv1x1(pooled_dim(cfg.pooling, e.fused), cfg.embedding);
  total += conv1x1(cfg.embedding, cfg.num_speakers);
  return total;
}

std::string model_summary(const TarnetModel& model, const FrontendConfig& fe) {
  std::ostringstream os;
  os << "layer                                    shape        params\n";
  int64_t total = 0;
  for (const auto& p : model.parameters()) {
    std::ostringstream shape;
    shape << "{";
    for (size_t i = 0; i < p.tensor.shape().size(); ++i)
      shape << (i ? "," : "") << p.tensor.shape()[i];
    shape << "}";
    os << p.name;
    for (size_t i = p.name.size(); i < 41; ++i) os << ' ';
    os << shape.str();
    for (size_t i = shape.str().size(); i < 13; ++i) os << ' ';
    os << p.tensor.numel() << "\n";
    total += p.tensor.numel();
  }
  const int rf = receptive_field(model.config().encoder);
  os << "total parameters: " << total << "\n";
  os << "receptive field: " << rf << " frames = " << rf * fe.hop_ms / 1000.0
     << " s at " << fe.hop_ms << " ms hop\n";
  return os.str();
}

std::string search_param_grid(const ModelConfig& base, double target,
                              double tolerance) {
  static const int kBottleneck[] = {32, 48, 64, 96, 128, 160, 192, 256};
  static const int kFused[] = {64, 96, 128, 192, 256, 384, 512};
  static const int kHiddenMult[] = {1, 2, 3, 4};
  static const int kEmbedding[] = {128, 192, 256, 512};
  std::ostringstream os;
  int hits = 0;
  for (int c : kBottleneck)
    for (int d : kFused)
      for (int hm : kHiddenMult)
        for (int e : kEmbedding) {
          ModelConfig cfg = base;
          cfg.encoder.bottleneck = c;
          cfg.encoder.fused = d;
          cfg.encoder.hidden = hm * c;
          cfg.embedding = e;
          const int64_t n = expected_param_count(cfg);
          if (std::abs(static_cast<double>(n) - target) <= tolerance * target) {
            os << "C=" << c << " D=" << d << " H=" << cfg.encoder.hidden
               << " E=" << e << " -> " << n << " params\n";
            ++hits;
          }
        }
  if (hits == 0) os << "no grid config within " << tolerance * 100 << "% of target\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {
constexpr char kMagic[] = "TARNET1\n";

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}
}  // namespace

std::map<std::string, std::string> model_config_to_meta(const ModelConfig& cfg) {
  std::map<std::string, std::string> m;
  m["cfg.num_mels"] = std::to_string(cfg.num_mels);
  m["cfg.bottleneck"] = std::to_string(cfg.encoder.bottleneck);
  m["cfg.hidden"] = std::to_string(cfg.encoder.hidden);
  m["cfg.kernel"] = std::to_string(cfg.encoder.kernel);
  m["cfg.dilations_short"] = join_ints(cfg.encoder.dilations_short);
  m["cfg.dilations_mid"] = join_ints(cfg.encoder.dilations_mid);
  m["cfg.dilations_long"] = join_ints(cfg.encoder.dilations_long);
  m["cfg.repeats"] = std::to_string(cfg.encoder.repeats);
  m["cfg.fused"] = std::to_string(cfg.encoder.fused);
  m["cfg.pooling"] = pool_kind_name(cfg.pooling);
  m["cfg.attention_hidden"] = std::to_string(cfg.attention_hidden);
  m["cfg.embedding"] = std::to_string(cfg.embedding);
  m["cfg.num_speakers"] = std::to_string(cfg.num_speakers);
  return m;
}

ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta) {
  auto get = [&meta](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError("checkpoint missing meta key " + key);
    return it->second;
  };
  ModelConfig cfg;
  cfg.num_mels = std::stoi(get("cfg.num_mels"));
  cfg.encoder.bottleneck = std::stoi(get("cfg.bottleneck"));
  cfg.encoder.hidden = std::stoi(get("cfg.hidden"));
  cfg.encoder.kernel = std::stoi(get("cfg.kernel"));
  cfg.encoder.dilations_short = split_ints(get("cfg.dilations_short"));
  cfg.encoder.dilations_mid = split_ints(get("cfg.dilations_mid"));
  cfg.encoder.dilations_long = split_ints(get("cfg.dilations_long"));
  cfg.encoder.repeats = std::stoi(get("cfg.repeats"));
  cfg.encoder.fused = std::stoi(get("cfg.fused"));
  cfg.pooling = parse_pool_kind(get("cfg.pooling"));
  cfg.attention_hidden = std::stoi(get("cfg.attention_hidden"));
  cfg.embedding = std::stoi(get("cfg.embedding"));
  cfg.num_speakers = std::stoi(get("cfg.num_speakers"));
  return cfg;
}

void save_checkpoint(const std::string& path, const TarnetModel& model,
                     const std::map<std::string, std::string>& extra_meta) {
  std::map<std::string, std::string> meta = model_config_to_meta(model.config());
  for (const auto& [k, v] : extra_meta) meta[k] = v;

  const ParamList params = model.parameters();
  std::ostringstream head;
  head << kMagic;
  head << "meta " << meta.size() << "\n";
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw UsageError("checkpoint meta keys may not contain spaces or newlines");
    head << k << " " << v << "\n";
  }
  head << "tensors " << params.size() << "\n";
  int64_t offset = 0;
  for (const auto& p : params) {
    head << p.name << " " << p.tensor.rank();
    for (int64_t d : p.tensor.shape()) head << " " << d;
    head << " " << offset << "\n";
    offset += p.tensor.numel() * static_cast<int64_t>(sizeof(double));
  }
  head << "data " << offset << "\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  const std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& p : params)
    out.write(reinterpret_cast<const char*>(p.tensor.data()),
              static_cast<std::streamsize>(p.tensor.numel() * sizeof(double)));
  if (!out) throw DataError("short write to checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  std::string magic(sizeof(kMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kMagic)
    throw DataError(path + ": not a TARNET1 checkpoint");

  auto read_line = [&in, &path]() {
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": truncated manifest");
    return line;
  };
  auto expect_count = [&path](const std::string& line, const std::string& word) {
    std::istringstream is(line);
    std::string tag;
    size_t n = 0;
    if (!(is >> tag >> n) || tag != word)
      throw DataError(path + ": malformed manifest line '" + line + "'");
    return n;
  };

  LoadedCheckpoint result;
  const size_t n_meta = expect_count(read_line(), "meta");
  for (size_t i = 0; i < n_meta; ++i) {
    const std::string line = read_line();
    const size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw DataError(path + ": malformed meta line '" + line + "'");
    result.meta[line.substr(0, sp)] = line.substr(sp + 1);
  }

  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
    int64_t offset;
  };
  const size_t n_tensors = expect_count(read_line(), "tensors");
  std::vector<Entry> entries(n_tensors);
  for (auto& e : entries) {
    std::istringstream is(read_line());
    int64_t rank = 0;
    if (!(is >> e.name >> rank) || rank < 1)
      throw DataError(path + ": malformed tensor manifest entry");
    e.shape.resize(static_cast<size_t>(rank));
    for (auto& d : e.shape)
      if (!(is >> d)) throw DataError(path + ": malformed tensor shape");
    if (!(is >> e.offset)) throw DataError(path + ": missing tensor offset");
  }
  const size_t n_bytes = expect_count(read_line(), "data");
  std::vector<char> blob(n_bytes);
  in.read(blob.data(), static_cast<std::streamsize>(n_bytes));
  if (!in) throw DataError(path + ": truncated data section");

  Rng scratch(0);  // parameters are overwritten below
  result.model = TarnetModel(model_config_from_meta(result.meta), scratch);
  ParamList params = result.model.parameters();
  if (params.size() != entries.size())
    throw DataError(path + ": checkpoint has " + std::to_string(entries.size()) +
                    " tensors, model wants " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const Entry& e = entries[i];
    Param& p = params[i];
    if (e.name != p.name || e.shape != p.tensor.shape())
      throw DataError(path + ": tensor " + e.name + " does not match model layout");
    const size_t bytes = static_cast<size_t>(p.tensor.numel()) * sizeof(double);
    if (static_cast<size_t>(e.offset) + bytes > blob.size())
      throw DataError(path + ": tensor " + e.name + " overruns data section");
    std::memcpy(p.tensor.data(), blob.data() + e.offset, bytes);
  }
  return result;
}

}  // namespace tarnet
