#pragma once

// Experiment configuration files and the runners behind the CLI: synthetic
// data preparation, single-system training, the lookup vs. char-aware
// comparison and the reference gradient check.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caaed/data.hpp"
#include "caaed/model.hpp"
#include "caaed/training.hpp"
#include "caaed/vocab.hpp"

namespace caaed {

// "[section]" headers and "key = value" lines; '#' starts a comment.
using IniSections = std::map<std::string, std::map<std::string, std::string>>;
IniSections parse_ini(const std::string& text);

struct DataSection {
  std::optional<std::uint64_t> seed;  // mandatory
  std::size_t n_train = 200;
  std::size_t n_dev = 40;
  std::size_t n_test = 60;
  std::size_t raw_dim = 8;
  std::size_t frames_per_char = 2;
  double noise_std = 0.1;
  std::vector<std::string> stems;     // empty: the default language
  std::vector<std::string> suffixes;  // "-" in files stands for the bare form
  std::vector<double> suffix_weights;
  std::vector<HoldoutPair> holdout;
};

struct VocabSection {
  VocabKind kind = VocabKind::WordPiece;
  std::size_t target_size = 40;
  // Mixed units only; 0 picks one above every inflected form's count.
  std::size_t threshold = 0;
};

struct ExperimentConfig {
  DataSection data;
  VocabSection vocab;
  ModelConfig model;  // input_dim and vocab_size are derived
  TrainConfig train;
  std::optional<std::uint64_t> train_seed;  // mandatory
  std::size_t max_decode_len = 200;
  std::vector<std::uint64_t> compare_seeds = {1, 2, 3};

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_text() const;
  // Throws ConfigError if a mandatory seed is missing.
  void require_seeds() const;
};

SynthLanguage make_language(const DataSection& data, std::uint64_t seed);

struct PreparedData {
  SynthLanguage language;
  std::vector<Utterance> train;
  std::vector<Utterance> dev;   // same distribution as train
  std::vector<Utterance> test;  // contains the held-out inflections
  Vocab vocab;
};

// Builds the vocabulary from the training transcripts and labels all sets.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

Vocab build_vocab(const VocabSection& section, const Corpus& corpus,
                  const SynthLanguage* language = nullptr);

// Smallest count that keeps every bare stem but no inflected form whole.
std::size_t inflection_threshold(const Corpus& corpus,
                                 const SynthLanguage& language);

ModelConfig resolve_model_config(const ExperimentConfig& config,
                                 const PreparedData& data,
                                 EmbeddingKind embedding);

struct SystemResult {
  EmbeddingKind embedding = EmbeddingKind::Lookup;
  double test_wer = 0.0;
  double dev_wer = 0.0;
  double heldout_accuracy = 0.0;
  ParameterCounts counts;
  TrainResult training;
};

SystemResult run_system(const ExperimentConfig& config,
                        const PreparedData& data, EmbeddingKind embedding,
                        std::uint64_t seed, std::ostream* log = nullptr);

struct CompareRow {
  std::uint64_t seed = 0;
  SystemResult lookup;
  SystemResult char_aware;
};

std::vector<CompareRow> run_compare(const ExperimentConfig& config,
                                    std::ostream* progress = nullptr);
std::string format_compare(const std::vector<CompareRow>& rows);

double median(std::vector<double> values);

// Per-component counts for a lookup and a char-aware config plus the PRR.
std::string format_parameter_report(const ModelConfig& lookup,
                                    const ModelConfig& char_aware);

// Finite-difference check of the full loss of a tiny model (64-bit).
struct ModelGradCheck {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  bool fixed_projections_untouched = false;
};
ModelGradCheck gradcheck_reference(EmbeddingKind embedding,
                                   std::uint64_t seed = 7);

}  // namespace caaed
