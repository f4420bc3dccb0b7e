#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tarnet/rng.hpp"
#include "tarnet/wav.hpp"

namespace tarnet {

/// Source-filter voice description for the synthetic corpus: a glottal pulse
/// train at f0 shaped by three formant resonators, with cycle-length jitter.
struct SpeakerProfile {
  double f0_hz = 120.0;
  double formants_hz[3] = {500.0, 1500.0, 2500.0};
  double bandwidths_hz[3] = {80.0, 120.0, 160.0};
  double jitter = 0.01;  // fraction of the pitch period
};

enum class Split { kTrain, kVal, kTest, kUnassigned };

std::string split_name(Split s);
Split parse_split(const std::string& s);

/// One utterance: either a WAV file on disk or a deterministic synthesis
/// spec (profile + seed).
struct Utterance {
  std::string path;  // empty for in-memory synthetic utterances
  std::optional<SpeakerProfile> synth;
  uint64_t synth_seed = 0;
  int speaker = 0;
  double duration_seconds = 0.0;
  int sample_rate = 16000;
  Split split = Split::kUnassigned;
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::vector<std::string> speaker_names;  // index == label

  int num_speakers() const { return static_cast<int>(speaker_names.size()); }
};

/// Deterministic synthetic waveform for a profile.
Waveform synth_utterance(const SpeakerProfile& profile, double duration_seconds,
                         int sample_rate, uint64_t seed);

/// Random but seed-stable speaker profile; speakers drawn from one stream
/// are spread over distinct f0 and formant layouts.
SpeakerProfile random_profile(Rng& rng);

/// Synthetic corpus of n_speakers x utt_per_speaker in-memory utterances.
Corpus synth_corpus(int n_speakers, int utt_per_speaker, double duration_seconds,
                    uint64_t seed, int sample_rate = 16000);

/// Waveform behind an utterance (reads the WAV or synthesizes).
Waveform load_waveform(const Utterance& u);

/// Fixed-length crop with a uniformly random start offset. Requests longer
/// than the utterance wrap around; exact-length requests return the whole
/// waveform.
Waveform crop(const Waveform& w, double crop_seconds, Rng& rng);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  uint64_t seed = 0;
};

/// Assigns splits in place: per-speaker stratified, disjoint, exhaustive;
/// every speaker lands in all three splits. Requires >= 3 utterances per
/// speaker. Fractions must sum to 1.
void assign_splits(Corpus& corpus, const SplitSpec& spec);

Corpus filter_split(const Corpus& corpus, Split split);

/// Manifest CSV: header then one "path,speaker,duration,split" row per
/// utterance. Synthetic in-memory corpora serialize the synthesis spec in
/// place of a path.
void write_manifest(const std::string& path, const Corpus& corpus);
Corpus read_manifest(const std::string& path);

/// Scans root/<speaker>/*.wav; labels are the directory names in
/// lexicographic order.
Corpus ingest_directory(const std::string& root);

/// Writes a synthetic corpus to disk as WAV files plus a manifest; returns
/// the on-disk corpus.
Corpus materialize_corpus(const Corpus& corpus, const std::string& out_dir);

}  // namespace tarnet
