#include "tarnet/config.hpp"

#include <fstream>
#include <sstream>

#include "tarnet/errors.hpp"

namespace tarnet {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int value = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return value;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " wants an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double value = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return value;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " wants a number, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t value = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return value;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " wants an unsigned integer, got '" + v + "'");
  }
}

}  // namespace

void RunConfig::apply_override(const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw UsageError("override '" + spec + "' is not section.key=value");
  const std::string path = trim(spec.substr(0, eq));
  const std::string value = trim(spec.substr(eq + 1));
  const size_t dot = path.find('.');
  if (dot == std::string::npos)
    throw UsageError("override '" + spec + "' is not section.key=value");
  const std::string section = path.substr(0, dot);
  const std::string key = path.substr(dot + 1);
  const std::string full = section + "." + key;

  if (section == "frontend") {
    if (key == "sample_rate") frontend.sample_rate = parse_int(full, value);
    else if (key == "window_ms") frontend.window_ms = parse_double(full, value);
    else if (key == "hop_ms") frontend.hop_ms = parse_double(full, value);
    else if (key == "fft_size") frontend.fft_size = parse_int(full, value);
    else if (key == "num_mels") frontend.num_mels = parse_int(full, value);
    else if (key == "fmin_hz") frontend.fmin_hz = parse_double(full, value);
    else if (key == "fmax_hz") frontend.fmax_hz = parse_double(full, value);
    else throw UsageError("config: unknown key '" + full + "'");
  } else if (section == "encoder") {
    if (key == "bottleneck") encoder.bottleneck = parse_int(full, value);
    else if (key == "hidden") encoder.hidden = parse_int(full, value);
    else if (key == "kernel") encoder.kernel = parse_int(full, value);
    else if (key == "dilations_short") encoder.dilations_short = parse_int_list(value);
    else if (key == "dilations_mid") encoder.dilations_mid = parse_int_list(value);
    else if (key == "dilations_long") encoder.dilations_long = parse_int_list(value);
    else if (key == "repeats") encoder.repeats = parse_int(full, value);
    else if (key == "fused") encoder.fused = parse_int(full, value);
    else if (key == "embedding") embedding = parse_int(full, value);
    else throw UsageError("config: unknown key '" + full + "'");
  } else if (section == "pooling") {
    if (key == "kind") pooling = parse_pool_kind(value);
    else if (key == "attention_hidden") attention_hidden = parse_int(full, value);
    else throw UsageError("config: unknown key '" + full + "'");
  } else if (section == "train") {
    if (key == "lr") train.lr = parse_double(full, value);
    else if (key == "weight_decay") train.weight_decay = parse_double(full, value);
    else if (key == "momentum") train.momentum = parse_double(full, value);
    else if (key == "epochs") train.epochs = parse_int(full, value);
    else if (key == "batch_size") train.batch_size = parse_int(full, value);
    else if (key == "crop_seconds") train.crop_seconds = parse_double(full, value);
    else if (key == "seed") train.seed = parse_u64(full, value);
    else if (key == "jobs") train.jobs = parse_int(full, value);
    else if (key == "early_stop_train_top1")
      train.early_stop_train_top1 = parse_double(full, value);
    else if (key == "early_stop_val_top1")
      train.early_stop_val_top1 = parse_double(full, value);
    else throw UsageError("config: unknown key '" + full + "'");
  } else if (section == "data") {
    if (key == "seed") data.seed = parse_u64(full, value);
    else if (key == "speakers") data.speakers = parse_int(full, value);
    else if (key == "utterances_per_speaker")
      data.utterances_per_speaker = parse_int(full, value);
    else if (key == "duration_seconds") data.duration_seconds = parse_double(full, value);
    else if (key == "train_fraction") data.train_fraction = parse_double(full, value);
    else if (key == "val_fraction") data.val_fraction = parse_double(full, value);
    else if (key == "test_fraction") data.test_fraction = parse_double(full, value);
    else throw UsageError("config: unknown key '" + full + "'");
  } else {
    throw UsageError("config: unknown section '" + section + "'");
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw UsageError(path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw UsageError(path + ":" + std::to_string(lineno) + ": key outside any section");
    cfg.apply_override(section + "." + trim(line.substr(0, eq)) + "=" +
                       trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << "[frontend]\n"
     << "sample_rate = " << frontend.sample_rate << "\n"
     << "window_ms = " << frontend.window_ms << "\n"
     << "hop_ms = " << frontend.hop_ms << "\n"
     << "fft_size = " << frontend.fft_size << "\n"
     << "num_mels = " << frontend.num_mels << "\n"
     << "fmin_hz = " << frontend.fmin_hz << "\n"
     << "fmax_hz = " << frontend.fmax_hz << "\n\n";
  os << "[encoder]\n"
     << "bottleneck = " << encoder.bottleneck << "\n"
     << "hidden = " << encoder.hidden << "\n"
     << "kernel = " << encoder.kernel << "\n"
     << "dilations_short = " << join_ints(encoder.dilations_short) << "\n"
     << "dilations_mid = " << join_ints(encoder.dilations_mid) << "\n"
     << "dilations_long = " << join_ints(encoder.dilations_long) << "\n"
     << "repeats = " << encoder.repeats << "\n"
     << "fused = " << encoder.fused << "\n"
     << "embedding = " << embedding << "\n\n";
  os << "[pooling]\n"
     << "kind = " << pool_kind_name(pooling) << "\n"
     << "attention_hidden = " << attention_hidden << "\n\n";
  os << "[train]\n"
     << "lr = " << train.lr << "\n"
     << "weight_decay = " << train.weight_decay << "\n"
     << "momentum = " << train.momentum << "\n"
     << "epochs = " << train.epochs << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "crop_seconds = " << train.crop_seconds << "\n"
     << "seed = " << train.seed << "\n"
     << "jobs = " << train.jobs << "\n"
     << "early_stop_train_top1 = " << train.early_stop_train_top1 << "\n"
     << "early_stop_val_top1 = " << train.early_stop_val_top1 << "\n\n";
  os << "[data]\n"
     << "seed = " << data.seed << "\n"
     << "speakers = " << data.speakers << "\n"
     << "utterances_per_speaker = " << data.utterances_per_speaker << "\n"
     << "duration_seconds = " << data.duration_seconds << "\n"
     << "train_fraction = " << data.train_fraction << "\n"
     << "val_fraction = " << data.val_fraction << "\n"
     << "test_fraction = " << data.test_fraction << "\n";
  return os.str();
}

std::map<std::string, std::string> RunConfig::as_meta() const {
  std::map<std::string, std::string> meta;
  std::istringstream is(dump());
  std::string line, section;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const size_t eq = line.find('=');
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.empty()) value = "-";
    meta["run." + section + "." + key] = value;
  }
  return meta;
}

ModelConfig RunConfig::model_config(int num_speakers) const {
  ModelConfig cfg;
  cfg.num_mels = frontend.num_mels;
  cfg.encoder = encoder;
  cfg.pooling = pooling;
  cfg.attention_hidden = attention_hidden;
  cfg.embedding = embedding;
  cfg.num_speakers = num_speakers;
  return cfg;
}

SplitSpec RunConfig::split_spec() const {
  SplitSpec spec;
  spec.train = data.train_fraction;
  spec.val = data.val_fraction;
  spec.test = data.test_fraction;
  spec.seed = data.seed;
  return spec;
}

}  // namespace tarnet
