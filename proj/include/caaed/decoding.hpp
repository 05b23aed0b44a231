#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "caaed/data.hpp"
#include "caaed/model.hpp"
#include "caaed/vocab.hpp"

namespace caaed {

inline constexpr std::size_t kDefaultMaxDecodeLength = 200;

struct Hypothesis {
  std::vector<UnitId> ids;        // emitted units, ending with <eos> unless capped
  std::vector<double> log_probs;  // log-posterior of each emitted unit
  std::string text;
  bool capped = false;
};

// Greedy decoding from <sos>. `embeddings` overrides the model's provider,
// e.g. with a precomputed table; by default the model's own provider runs.
Hypothesis greedy_decode(const Model& model, const Vocab& vocab,
                         const FeatureMatrix& features,
                         std::size_t max_len = kDefaultMaxDecodeLength,
                         const EmbeddingProvider* embeddings = nullptr);

// Decodes every utterance. Char-aware models use a table computed once.
std::vector<Hypothesis> decode_all(const Model& model, const Vocab& vocab,
                                   const std::vector<Utterance>& data,
                                   std::size_t max_len = kDefaultMaxDecodeLength);

// ---------------------------------------------------------------------------
// Word error rate

struct WerResult {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  // errors / max(1, ref_words)
  double rate() const;
  WerResult& operator+=(const WerResult& o);
};

enum class EditOp { Match, Substitute, Delete, Insert };

struct AlignedPair {
  EditOp op;
  std::size_t ref = 0;  // index into ref (unused for Insert)
  std::size_t hyp = 0;  // index into hyp (unused for Delete)
};

// Unit-cost Levenshtein alignment in reference order.
std::vector<AlignedPair> align_words(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp);

WerResult word_errors(const std::vector<std::string>& ref,
                      const std::vector<std::string>& hyp);
WerResult wer(std::string_view ref, std::string_view hyp);

// Tab-separated: utterance index, rate, reference, hypothesis.
struct HypothesisRecord {
  std::size_t index = 0;
  double rate = 0.0;
  std::string reference;
  std::string hypothesis;
};

void write_hypotheses(const std::string& path,
                      const std::vector<HypothesisRecord>& records);
std::vector<HypothesisRecord> read_hypotheses(const std::string& path);

// Totals over all records, recomputed from the texts.
WerResult score_records(const std::vector<HypothesisRecord>& records);

// Fraction of reference occurrences of `words` that align to an identical
// hypothesis word.
double word_accuracy(const std::vector<std::string>& refs,
                     const std::vector<std::string>& hyps,
                     const std::vector<std::string>& words);

}  // namespace caaed
