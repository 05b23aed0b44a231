#include <filesystem>
#include <fstream>

#include "caaed/decoding.hpp"
#include "caaed/error.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace caaed;
using caaed::testing::Gen;
using caaed::testing::edit_distance;

namespace {

std::vector<std::string> random_words(Gen& g, std::size_t max_len) {
  std::vector<std::string> w(g.size(0, max_len));
  for (auto& x : w) x = g.word("abc", 1, 2);
  return w;
}

std::string join(const std::vector<std::string>& w) {
  std::string s;
  for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
  return s;
}

Vocab toy_vocab() { return build_wordpiece(Corpus({"ab ab ab ba abb"}), 12); }

Model toy_model(const Vocab& v, EmbeddingKind kind, std::uint64_t seed) {
  ModelConfig c;
  c.input_dim = 6;
  c.hidden = 8;
  c.conv_taps = 3;
  c.vocab_size = v.size();
  c.embedding = kind;
  c.num_chars = CharInventory::size();
  c.char_embed_dim = 4;
  Model m = Model::create(c, v, seed);
  Gen g(seed + 100);
  for (auto& [name, t] : m.parameters()) {
    for (double& x : t.mutable_data()) x += g.real(-0.5, 0.5);
  }
  return m;
}

FeatureMatrix random_features(Gen& g, std::size_t frames, std::size_t dim) {
  FeatureMatrix f(frames, dim);
  for (float& x : f.values) x = static_cast<float>(g.real(-2, 2));
  return f;
}

}  // namespace

TEST_CASE("word error counts on hand examples") {
  WerResult w = wer("the cat sat", "the bat sat down");
  CHECK(w.substitutions == 1);
  CHECK(w.insertions == 1);
  CHECK(w.deletions == 0);
  CHECK(w.ref_words == 3);
  CHECK(w.rate() == doctest::Approx(2.0 / 3.0));
  CHECK(wer("a b", "").deletions == 2);
  CHECK(wer("", "a b").rate() == 2.0);
  CHECK(wer("", "").rate() == 0.0);
}

TEST_CASE("word errors equal an independent edit distance (property)") {
  Gen g(21);
  for (int trial = 0; trial < 500; ++trial) {
    const auto ref = random_words(g, 7);
    const auto hyp = random_words(g, 7);
    const WerResult w = word_errors(ref, hyp);
    CAPTURE(join(ref));
    CAPTURE(join(hyp));
    CHECK(w.errors() == edit_distance(ref, hyp));
    CHECK(wer(join(ref), join(hyp)).errors() == w.errors());
    CHECK(w.ref_words == ref.size());
  }
}

TEST_CASE("alignments rebuild the hypothesis (property)") {
  Gen g(22);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ref = random_words(g, 6);
    const auto hyp = random_words(g, 6);
    std::vector<std::string> rebuilt;
    std::size_t refs_seen = 0;
    for (const AlignedPair& p : align_words(ref, hyp)) {
      if (p.op != EditOp::Insert) CHECK(p.ref == refs_seen++);
      if (p.op == EditOp::Match) CHECK(ref[p.ref] == hyp[p.hyp]);
      if (p.op != EditOp::Delete) rebuilt.push_back(hyp[p.hyp]);
    }
    CHECK(refs_seen == ref.size());
    CHECK(rebuilt == hyp);
  }
}

TEST_CASE("edit distance is a metric on word sequences (property)") {
  Gen g(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_words(g, 5), b = random_words(g, 5), c = random_words(g, 5);
    const std::size_t ab = word_errors(a, b).errors();
    CHECK(ab == word_errors(b, a).errors());
    CHECK(word_errors(a, a).errors() == 0);
    CHECK(word_errors(a, c).errors() <= ab + word_errors(b, c).errors());
  }
}

TEST_CASE("hypothesis files round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "caaed_hyps_test.tsv").string();
  std::vector<HypothesisRecord> records = {{0, 0.5, "a b", "a"}, {1, 0.0, "c", "c"}, {2, 0.0, "", ""}};
  write_hypotheses(path, records);
  const auto back = read_hypotheses(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].reference == "a b");
  CHECK(back[0].hypothesis == "a");
  CHECK(back[2].reference.empty());
  CHECK(score_records(back).errors() == 1);
  CHECK(score_records(back).ref_words == 3);

  {
    std::ofstream out(path);
    out << "0\t0.5\tonly three\n";
  }
  CHECK_THROWS_AS(read_hypotheses(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_hypotheses(path), DataError);
}

TEST_CASE("held-out word accuracy") {
  const std::vector<std::string> refs = {"cats run", "the cats", "dogs"};
  const std::vector<std::string> hyps = {"cats run", "the cat", "dogs"};
  CHECK(word_accuracy(refs, hyps, {"cats"}) == doctest::Approx(0.5));
  CHECK(word_accuracy(refs, hyps, {"dogs", "cats"}) == doctest::Approx(2.0 / 3.0));
  CHECK(word_accuracy(refs, hyps, {"birds"}) == 0.0);
}

TEST_CASE("greedy decoding stops at end of sentence") {
  const Vocab v = toy_vocab();
  Model m = toy_model(v, EmbeddingKind::Lookup, 1);
  for (double& x : m.parameters().get("output.weight").mutable_data()) x = 0.0;
  auto bias = m.parameters().get("output.bias").mutable_data();
  std::fill(bias.begin(), bias.end(), 0.0);
  bias[Vocab::kEos] = 1.0;
  Gen g(2);
  const Hypothesis h = greedy_decode(m, v, random_features(g, 4, 6));
  CHECK(h.ids == std::vector<UnitId>{Vocab::kEos});
  CHECK(h.text.empty());
  CHECK_FALSE(h.capped);
}

TEST_CASE("greedy decoding caps the output length and breaks ties low") {
  const Vocab v = toy_vocab();
  Model m = toy_model(v, EmbeddingKind::Lookup, 1);
  for (double& x : m.parameters().get("output.weight").mutable_data()) x = 0.0;
  for (double& x : m.parameters().get("output.bias").mutable_data()) x = 0.0;
  Gen g(3);
  const Hypothesis h = greedy_decode(m, v, random_features(g, 4, 6), 7);
  CHECK(h.capped);
  CHECK(h.ids == std::vector<UnitId>(7, 0));
  CHECK(h.log_probs.size() == 7);
  CHECK_THROWS_AS(greedy_decode(m, v, random_features(g, 4, 6), 0), ConfigError);
}

TEST_CASE("precomputed table decodes like the character RNN") {
  const Vocab v = toy_vocab();
  const Model m = toy_model(v, EmbeddingKind::CharAware, 4);
  const LookupProvider table = m.char_aware()->precompute_table();
  Gen g(5);
  std::vector<Utterance> data;
  for (int k = 0; k < 30; ++k) {
    Utterance u;
    u.features = random_features(g, g.size(1, 6), 6);
    data.push_back(u);
  }
  const auto batch = decode_all(m, v, data, 25);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Hypothesis live = greedy_decode(m, v, data[k].features, 25);
    const Hypothesis cached = greedy_decode(m, v, data[k].features, 25, &table);
    CHECK(live.ids == cached.ids);
    CHECK(live.log_probs == cached.log_probs);
    CHECK(batch[k].ids == live.ids);
  }
}
