#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "caaed/vocab.hpp"

namespace caaed {

// Row-major frame matrix, one acoustic frame per row.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c)
      : rows(r), cols(c), values(r * c, 0.0f) {}

  float& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }
  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct Utterance {
  FeatureMatrix features;
  std::vector<UnitId> labels;  // <sos> ... <eos>
  std::string transcript;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// Concatenates consecutive groups of `factor` frames; the last group is
// padded with zero frames. Output row i covers input rows
// factor*i .. factor*i + factor - 1.
FeatureMatrix stack_frames(const FeatureMatrix& raw, std::size_t factor = 3);

// Fills `labels` from each transcript.
void assign_labels(std::vector<Utterance>& utterances, const Vocab& vocab);

// ---------------------------------------------------------------------------
// Synthetic inflecting language

struct SynthLanguage {
  std::vector<std::string> stems;
  std::vector<std::string> suffixes;  // "" is the bare form
  // Relative sampling weight per suffix; empty means uniform.
  std::vector<double> suffix_weights;
  // One prototype per CharInventory symbol, each of length raw_dim.
  std::vector<std::vector<float>> prototypes;
  std::size_t raw_dim = 8;
  std::size_t frames_per_char = 2;
  double noise_std = 0.1;
  std::size_t stack_factor = 3;

  std::size_t feature_dim() const { return raw_dim * stack_factor; }
};

SynthLanguage make_synth_language(std::vector<std::string> stems,
                                  std::vector<std::string> suffixes,
                                  std::uint64_t seed,
                                  std::size_t raw_dim = 8,
                                  std::size_t frames_per_char = 2,
                                  double noise_std = 0.1);

// A small default language whose stems come in rhyming families.
SynthLanguage default_synth_language(std::uint64_t seed);

using HoldoutPair = std::pair<std::string, std::string>;  // (stem, suffix)

struct SynthCorpus {
  std::vector<Utterance> train;
  std::vector<Utterance> test;
};

// Features are the prototypes of the transcript's characters (word gaps use
// the <space> prototype), each repeated frames_per_char times, plus Gaussian
// noise, then stacked. Held-out inflections never occur in train; every test
// utterance contains at least one of them when any are given. Labels are
// left empty.
SynthCorpus synth_corpus(const SynthLanguage& lang, std::size_t n_train,
                         std::size_t n_test,
                         const std::vector<HoldoutPair>& holdout,
                         std::uint64_t seed);

FeatureMatrix render_features(const SynthLanguage& lang,
                              const std::string& transcript,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset files: magic "CAAED1" then per-utterance records of
// u32 frames, u32 dim, f32 row-major data, u32 label count, u32 labels,
// u32 transcript bytes, transcript. All integers little-endian.

void write_dataset(std::ostream& os, const std::vector<Utterance>& utterances);
std::vector<Utterance> read_dataset(std::istream& is);
void save_dataset(const std::string& path,
                  const std::vector<Utterance>& utterances);
std::vector<Utterance> load_dataset(const std::string& path);

void save_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> transcripts(const std::vector<Utterance>& utterances);

}  // namespace caaed
