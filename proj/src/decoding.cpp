#include "caaed/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "caaed/error.hpp"

namespace caaed {

Hypothesis greedy_decode(const Model& model, const Vocab& vocab,
                         const FeatureMatrix& features, std::size_t max_len,
                         const EmbeddingProvider* embeddings) {
  if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
  const EmbeddingProvider& provider =
      embeddings != nullptr ? *embeddings : model.provider();
  NoGradGuard no_grad;
  EncodedUtterance enc = model.encode(features);
  DecoderState state = model.initial_state(enc);
  Hypothesis hyp;
  UnitId input = Vocab::kSos;
  while (true) {
    StepOutput step = model.decode_step(state, provider.embed(input), enc);
    state = std::move(step.state);
    const UnitId best = argmax(step.logits.data());
    hyp.ids.push_back(best);
    hyp.log_probs.push_back(log_softmax(step.logits)[best]);
    if (best == Vocab::kEos) break;
    if (hyp.ids.size() >= max_len) {
      hyp.capped = true;
      break;
    }
    input = best;
  }
  hyp.text = vocab.detokenize(hyp.ids);
  return hyp;
}

std::vector<Hypothesis> decode_all(const Model& model, const Vocab& vocab,
                                   const std::vector<Utterance>& data,
                                   std::size_t max_len) {
  std::vector<Hypothesis> out;
  out.reserve(data.size());
  if (const CharAwareProvider* ca = model.char_aware()) {
    LookupProvider table = ca->precompute_table();
    for (const Utterance& u : data) {
      out.push_back(greedy_decode(model, vocab, u.features, max_len, &table));
    }
  } else {
    for (const Utterance& u : data) {
      out.push_back(greedy_decode(model, vocab, u.features, max_len));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double WerResult::rate() const {
  return static_cast<double>(errors()) /
         static_cast<double>(std::max<std::size_t>(1, ref_words));
}

WerResult& WerResult::operator+=(const WerResult& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_words += o.ref_words;
  return *this;
}

std::vector<AlignedPair> align_words(const std::vector<std::string>& ref,
                                     const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [m, &cost](std::size_t i, std::size_t j) -> std::size_t& {
    return cost[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  // Backtrace preferring match/substitution, then deletion, then insertion.
  std::vector<AlignedPair> path;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        path.push_back({same ? EditOp::Match : EditOp::Substitute, i - 1, j - 1});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      path.push_back({EditOp::Delete, i - 1, 0});
      --i;
    } else {
      path.push_back({EditOp::Insert, 0, j - 1});
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

WerResult word_errors(const std::vector<std::string>& ref,
                      const std::vector<std::string>& hyp) {
  WerResult r;
  r.ref_words = ref.size();
  for (const AlignedPair& p : align_words(ref, hyp)) {
    switch (p.op) {
      case EditOp::Match: break;
      case EditOp::Substitute: ++r.substitutions; break;
      case EditOp::Delete: ++r.deletions; break;
      case EditOp::Insert: ++r.insertions; break;
    }
  }
  return r;
}

WerResult wer(std::string_view ref, std::string_view hyp) {
  return word_errors(split_words(ref), split_words(hyp));
}

void write_hypotheses(const std::string& path,
                      const std::vector<HypothesisRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("hypotheses: cannot write " + path);
  char rate[32];
  for (const HypothesisRecord& r : records) {
    std::snprintf(rate, sizeof rate, "%.6f", r.rate);
    out << r.index << '\t' << rate << '\t' << r.reference << '\t'
        << r.hypothesis << '\n';
  }
}

std::vector<HypothesisRecord> read_hypotheses(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hypotheses: cannot open " + path);
  std::vector<HypothesisRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw DataError("hypotheses: line " + std::to_string(line_no) +
                      " does not have 4 fields");
    }
    HypothesisRecord r;
    try {
      r.index = std::stoull(fields[0]);
      r.rate = std::stod(fields[1]);
    } catch (const std::exception&) {
      throw DataError("hypotheses: bad number on line " +
                      std::to_string(line_no));
    }
    r.reference = fields[2];
    r.hypothesis = fields[3];
    out.push_back(std::move(r));
  }
  return out;
}

WerResult score_records(const std::vector<HypothesisRecord>& records) {
  WerResult total;
  for (const HypothesisRecord& r : records) total += wer(r.reference, r.hypothesis);
  return total;
}

double word_accuracy(const std::vector<std::string>& refs,
                     const std::vector<std::string>& hyps,
                     const std::vector<std::string>& words) {
  const std::set<std::string> targets(words.begin(), words.end());
  std::size_t seen = 0;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto ref = split_words(refs[k]);
    const auto hyp = split_words(hyps.at(k));
    for (const AlignedPair& p : align_words(ref, hyp)) {
      if (p.op == EditOp::Insert || !targets.count(ref[p.ref])) continue;
      ++seen;
      if (p.op == EditOp::Match) ++correct;
    }
  }
  return seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
}

}  // namespace caaed
