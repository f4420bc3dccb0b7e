#include "tarnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tarnet/errors.hpp"

namespace fs = std::filesystem;

namespace tarnet {

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "unassigned";
  }
  throw UsageError("invalid split");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "unassigned") return Split::kUnassigned;
  throw DataError("unknown split name '" + s + "'");
}

// ---------------------------------------------------------------------------
// Synthesis

Waveform synth_utterance(const SpeakerProfile& profile, double duration_seconds,
                         int sample_rate, uint64_t seed) {
  if (duration_seconds <= 0.0) throw UsageError("synth_utterance: duration must be > 0");
  Rng rng(seed);
  const int64_t n = static_cast<int64_t>(std::llround(duration_seconds * sample_rate));
  std::vector<double> excitation(static_cast<size_t>(n), 0.0);

  // Pulse train with per-utterance pitch offset, slow drift, and per-cycle
  // jitter on the period length.
  const double f0 = profile.f0_hz * (1.0 + rng.uniform(-0.03, 0.03));
  const double drift_rate = rng.uniform(0.5, 1.5);   // cycles over the utterance
  const double drift_phase = rng.uniform(0.0, 6.283185307179586);
  const double drift_depth = 0.02;
  double t = 0.0;
  while (t < static_cast<double>(n)) {
    const int64_t idx = static_cast<int64_t>(t);
    if (idx >= 0 && idx < n) excitation[static_cast<size_t>(idx)] = 1.0;
    const double pos = t / static_cast<double>(n);
    const double inst_f0 =
        f0 * (1.0 + drift_depth * std::sin(drift_phase + 6.283185307179586 * drift_rate * pos));
    const double period = sample_rate / inst_f0;
    t += period * (1.0 + profile.jitter * rng.uniform(-1.0, 1.0));
  }

  // Cascade of three two-pole resonators at the formant frequencies.
  std::vector<double> y = std::move(excitation);
  for (int f = 0; f < 3; ++f) {
    const double r = std::exp(-3.14159265358979323846 * profile.bandwidths_hz[f] / sample_rate);
    const double theta = 2.0 * 3.14159265358979323846 * profile.formants_hz[f] / sample_rate;
    const double a1 = 2.0 * r * std::cos(theta);
    const double a2 = -r * r;
    double y1 = 0.0, y2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double v = y[static_cast<size_t>(i)] + a1 * y1 + a2 * y2;
      y[static_cast<size_t>(i)] = v;
      y2 = y1;
      y1 = v;
    }
  }

  // Normalize and add noise at 30 dB SNR.
  double power = 0.0;
  for (double v : y) power += v * v;
  power /= static_cast<double>(n);
  const double target_rms = 0.15;
  const double gain = power > 0.0 ? target_rms / std::sqrt(power) : 1.0;
  const double noise_rms = target_rms * std::pow(10.0, -30.0 / 20.0);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    w.samples[static_cast<size_t>(i)] =
        std::clamp(gain * y[static_cast<size_t>(i)] + noise_rms * rng.normal(), -1.0, 1.0);
  return w;
}

SpeakerProfile random_profile(Rng& rng) {
  SpeakerProfile p;
  p.f0_hz = rng.uniform(90.0, 300.0);
  p.formants_hz[0] = rng.uniform(300.0, 900.0);
  p.formants_hz[1] = p.formants_hz[0] + rng.uniform(400.0, 1300.0);
  p.formants_hz[2] = p.formants_hz[1] + rng.uniform(600.0, 1600.0);
  p.bandwidths_hz[0] = rng.uniform(60.0, 120.0);
  p.bandwidths_hz[1] = rng.uniform(90.0, 180.0);
  p.bandwidths_hz[2] = rng.uniform(120.0, 240.0);
  p.jitter = rng.uniform(0.005, 0.02);
  return p;
}

Corpus synth_corpus(int n_speakers, int utt_per_speaker, double duration_seconds,
                    uint64_t seed, int sample_rate) {
  if (n_speakers < 2)
    throw UsageError("synth_corpus: closed-set identification needs >= 2 speakers");
  if (utt_per_speaker < 1) throw UsageError("synth_corpus: utt_per_speaker must be >= 1");
  Rng rng = Rng::stream(seed, "data");

  Corpus corpus;
  corpus.speaker_names.reserve(static_cast<size_t>(n_speakers));
  std::vector<SpeakerProfile> profiles(static_cast<size_t>(n_speakers));
  for (int s = 0; s < n_speakers; ++s) {
    SpeakerProfile p = random_profile(rng);
    // Pin f0 to a per-speaker log-spaced band so pitch separates speakers
    // regardless of the seed; formants stay fully random.
    const double lo = 90.0, hi = 300.0;
    const double band = n_speakers > 1 ? static_cast<double>(s) / (n_speakers - 1) : 0.5;
    p.f0_hz = lo * std::pow(hi / lo, band) * (1.0 + 0.02 * (rng.uniform() - 0.5));
    profiles[static_cast<size_t>(s)] = p;
    char name[16];
    std::snprintf(name, sizeof(name), "spk_%03d", s);
    corpus.speaker_names.emplace_back(name);
  }
  for (int s = 0; s < n_speakers; ++s) {
    for (int u = 0; u < utt_per_speaker; ++u) {
      Utterance utt;
      utt.synth = profiles[static_cast<size_t>(s)];
      utt.synth_seed = rng.next_u64();
      utt.speaker = s;
      utt.duration_seconds = duration_seconds;
      utt.sample_rate = sample_rate;
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

Waveform load_waveform(const Utterance& u) {
  if (u.synth)
    return synth_utterance(*u.synth, u.duration_seconds, u.sample_rate, u.synth_seed);
  Waveform w = read_wav(u.path);
  if (w.sample_rate != u.sample_rate)
    throw DataError(u.path + ": sample rate " + std::to_string(w.sample_rate) +
                    " != manifest rate " + std::to_string(u.sample_rate));
  return w;
}

Waveform crop(const Waveform& w, double crop_seconds, Rng& rng) {
  const int64_t n = static_cast<int64_t>(w.samples.size());
  const int64_t len = static_cast<int64_t>(std::llround(crop_seconds * w.sample_rate));
  if (len < 1) throw UsageError("crop: requested length is empty");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(static_cast<size_t>(len));
  if (len == n) {
    out.samples = w.samples;
  } else if (len < n) {
    const int64_t start = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n - len + 1)));
    std::copy(w.samples.begin() + start, w.samples.begin() + start + len,
              out.samples.begin());
  } else {
    // Wrap-around padding for requests longer than the utterance.
    const int64_t start = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n)));
    for (int64_t i = 0; i < len; ++i)
      out.samples[static_cast<size_t>(i)] = w.samples[static_cast<size_t>((start + i) % n)];
  }
  return out;
}

void assign_splits(Corpus& corpus, const SplitSpec& spec) {
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9)
    throw UsageError("split fractions must sum to 1");
  if (spec.train <= 0.0 || spec.val <= 0.0 || spec.test <= 0.0)
    throw UsageError("split fractions must all be positive");
  Rng rng = Rng::stream(spec.seed, "split");

  std::vector<std::vector<size_t>> by_speaker(corpus.speaker_names.size());
  for (size_t i = 0; i < corpus.utterances.size(); ++i)
    by_speaker.at(static_cast<size_t>(corpus.utterances[i].speaker)).push_back(i);

  for (size_t s = 0; s < by_speaker.size(); ++s) {
    auto& idx = by_speaker[s];
    const int64_t n = static_cast<int64_t>(idx.size());
    if (n < 3)
      throw DataError("speaker " + corpus.speaker_names[s] + " has " +
                      std::to_string(n) + " utterances; stratified splits need >= 3");
    rng.shuffle(idx);

    const double fracs[3] = {spec.train, spec.val, spec.test};
    int64_t counts[3];
    double remainders[3];
    int64_t used = 0;
    for (int j = 0; j < 3; ++j) {
      const double ideal = fracs[j] * static_cast<double>(n);
      counts[j] = static_cast<int64_t>(std::floor(ideal + 1e-9));
      remainders[j] = ideal - static_cast<double>(counts[j]);
      used += counts[j];
    }
    while (used < n) {  // largest remainder first
      int best = 0;
      for (int j = 1; j < 3; ++j)
        if (remainders[j] > remainders[best]) best = j;
      ++counts[best];
      remainders[best] = -1.0;
      ++used;
    }
    for (int j = 0; j < 3; ++j) {  // closed set: every bucket non-empty
      if (counts[j] == 0) {
        int donor = 0;
        for (int k = 1; k < 3; ++k)
          if (counts[k] > counts[donor]) donor = k;
        --counts[donor];
        ++counts[j];
      }
    }

    size_t pos = 0;
    const Split order[3] = {Split::kTrain, Split::kVal, Split::kTest};
    for (int j = 0; j < 3; ++j)
      for (int64_t c = 0; c < counts[j]; ++c)
        corpus.utterances[idx[pos++]].split = order[j];
  }
}

Corpus filter_split(const Corpus& corpus, Split split) {
  Corpus out;
  out.speaker_names = corpus.speaker_names;
  for (const auto& u : corpus.utterances)
    if (u.split == split) out.utterances.push_back(u);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

std::string synth_uri(const Utterance& u) {
  const SpeakerProfile& p = *u.synth;
  std::ostringstream os;
  os.precision(17);
  os << "synth:f0=" << p.f0_hz << ";f1=" << p.formants_hz[0]
     << ";f2=" << p.formants_hz[1] << ";f3=" << p.formants_hz[2]
     << ";b1=" << p.bandwidths_hz[0] << ";b2=" << p.bandwidths_hz[1]
     << ";b3=" << p.bandwidths_hz[2] << ";jitter=" << p.jitter
     << ";sr=" << u.sample_rate << ";seed=" << u.synth_seed;
  return os.str();
}

void parse_synth_uri(const std::string& uri, Utterance& u) {
  SpeakerProfile p;
  u.synth_seed = 0;
  std::istringstream is(uri.substr(6));
  std::string field;
  while (std::getline(is, field, ';')) {
    const size_t eq = field.find('=');
    if (eq == std::string::npos) throw DataError("malformed synth field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "f0") p.f0_hz = std::stod(val);
    else if (key == "f1") p.formants_hz[0] = std::stod(val);
    else if (key == "f2") p.formants_hz[1] = std::stod(val);
    else if (key == "f3") p.formants_hz[2] = std::stod(val);
    else if (key == "b1") p.bandwidths_hz[0] = std::stod(val);
    else if (key == "b2") p.bandwidths_hz[1] = std::stod(val);
    else if (key == "b3") p.bandwidths_hz[2] = std::stod(val);
    else if (key == "jitter") p.jitter = std::stod(val);
    else if (key == "sr") u.sample_rate = std::stoi(val);
    else if (key == "seed") u.synth_seed = std::stoull(val);
    else throw DataError("unknown synth field '" + key + "'");
  }
  u.synth = p;
}

}  // namespace

void write_manifest(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << "path,speaker,duration,split\n";
  out.precision(9);
  for (const auto& u : corpus.utterances) {
    const std::string loc = u.synth ? synth_uri(u) : u.path;
    if (loc.find(',') != std::string::npos || loc.find('\n') != std::string::npos)
      throw DataError("manifest paths may not contain commas: " + loc);
    out << loc << "," << corpus.speaker_names.at(static_cast<size_t>(u.speaker))
        << "," << u.duration_seconds << "," << split_name(u.split) << "\n";
  }
  if (!out) throw DataError("short write to manifest: " + path);
}

Corpus read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "path,speaker,duration,split")
    throw DataError(path + ": missing manifest header");

  struct Row {
    std::string loc, speaker, split;
    double duration;
  };
  std::vector<Row> rows;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    Row r;
    std::string dur;
    if (!std::getline(is, r.loc, ',') || !std::getline(is, r.speaker, ',') ||
        !std::getline(is, dur, ',') || !std::getline(is, r.split))
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed row");
    r.duration = std::stod(dur);
    rows.push_back(std::move(r));
  }

  Corpus corpus;
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.speaker);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  corpus.speaker_names = names;

  for (const auto& r : rows) {
    Utterance u;
    if (r.loc.rfind("synth:", 0) == 0)
      parse_synth_uri(r.loc, u);
    else
      u.path = r.loc;
    u.speaker = static_cast<int>(
        std::lower_bound(names.begin(), names.end(), r.speaker) - names.begin());
    u.duration_seconds = r.duration;
    u.split = parse_split(r.split);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

Corpus ingest_directory(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError(root + " is not a directory");
  std::vector<std::string> speakers;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) speakers.push_back(entry.path().filename().string());
  std::sort(speakers.begin(), speakers.end());
  if (speakers.size() < 2)
    throw DataError(root + ": need at least 2 speaker directories, found " +
                    std::to_string(speakers.size()));

  Corpus corpus;
  corpus.speaker_names = speakers;
  for (size_t s = 0; s < speakers.size(); ++s) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / speakers[s]))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Waveform w = read_wav(f);
      Utterance u;
      u.path = f;
      u.speaker = static_cast<int>(s);
      u.duration_seconds = w.duration_seconds();
      u.sample_rate = w.sample_rate;
      corpus.utterances.push_back(std::move(u));
    }
  }
  if (corpus.utterances.empty()) throw DataError(root + ": no WAV files found");
  return corpus;
}

Corpus materialize_corpus(const Corpus& corpus, const std::string& out_dir) {
  Corpus out = corpus;
  std::vector<int> counter(corpus.speaker_names.size(), 0);
  for (auto& u : out.utterances) {
    const std::string& speaker = out.speaker_names.at(static_cast<size_t>(u.speaker));
    const fs::path dir = fs::path(out_dir) / speaker;
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%04d.wav",
                  counter[static_cast<size_t>(u.speaker)]++);
    const fs::path file = dir / name;
    write_wav(file.string(), load_waveform(u));
    u.path = file.string();
    u.synth.reset();
  }
  return out;
}

}  // namespace tarnet
