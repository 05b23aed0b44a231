#include <algorithm>
#include <set>
#include <sstream>

#include "caaed/data.hpp"
#include "caaed/error.hpp"
#include "caaed/vocab.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace caaed;
using caaed::testing::Gen;
using caaed::testing::Merge;
using caaed::testing::brute_force_merges;

namespace {

std::vector<std::string> random_lines(Gen& g, const std::string& alphabet,
                                      std::size_t n) {
  std::vector<std::string> pool;
  for (int i = 0; i < 6; ++i) pool.push_back(g.word(alphabet, 1, 5));
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    std::string line;
    const std::size_t words = g.size(1, 4);
    for (std::size_t k = 0; k < words; ++k) {
      if (k) line += ' ';
      line += g.coin(0.7) ? pool[g.size(0, pool.size() - 1)] : g.word(alphabet, 1, 4);
    }
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

TEST_CASE("character inventory layout") {
  CHECK(CharInventory::size() == 31);
  CHECK(CharInventory::symbols()[0] == "<sos>");
  CHECK(CharInventory::id_of('a') == 4);
  CHECK(CharInventory::id_of('z') == 29);
  CHECK(CharInventory::id_of('\'') == 30);
  CHECK(CharInventory::id_of('7') == CharInventory::kUnk);
}

TEST_CASE("corpus counts words and rejects foreign characters") {
  Corpus c({"the cat", "the  dog "});
  CHECK(c.word_counts().at("the") == 2);
  CHECK(c.word_counts().at("dog") == 1);
  CHECK_THROWS_AS(Corpus({"r2d2"}), DataError);
  CHECK(split_words("  a  b ") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("vocab kind names") {
  for (VocabKind k : {VocabKind::WordPiece, VocabKind::MixedUnit, VocabKind::Character}) {
    CHECK(parse_vocab_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_vocab_kind("bytes"), ConfigError);
}

TEST_CASE("first merge of a toy corpus") {
  Vocab v = build_wordpiece(Corpus({"ab ab ab abc"}), 8);
  REQUIRE(!v.merges().empty());
  CHECK(v.merges().front() == Merge{"a", "b"});
  CHECK(v.contains("ab"));
  CHECK(v.segment_word("abc").front() == "ab");
}

TEST_CASE("merging stops when no pair repeats") {
  Vocab v = build_wordpiece(Corpus({"abc"}), 100);
  CHECK(v.merges().empty());
  CHECK(v.size() == 4 + 3);
  CHECK_THROWS_AS(build_wordpiece(Corpus({"abc"}), 5), ConfigError);
}

TEST_CASE("merges equal the brute-force pair count oracle (property)") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Gen g(seed);
    const std::string alphabet = g.coin() ? "ab" : "abcde";
    const auto lines = random_lines(g, alphabet, g.size(1, 12));
    Corpus corpus(lines);
    std::set<char> seen;
    for (const auto& l : lines) {
      for (char c : l) {
        if (c != ' ') seen.insert(c);
      }
    }
    const std::size_t base = 4 + seen.size();
    const std::size_t target = base + g.size(0, 12);
    Vocab v = build_wordpiece(corpus, target);
    CAPTURE(seed);
    CHECK(v.merges() == brute_force_merges(lines, base, target));
    CHECK(v.size() <= target);
  }
}

TEST_CASE("mixed units decompose rare words against frequent ones") {
  Corpus corpus({"play play ground ground playground playa"});
  Vocab v = build_mixed_units(corpus, 2);
  CHECK(v.contains("play"));
  CHECK(v.contains("ground"));
  CHECK_FALSE(v.contains("playground"));
  CHECK(v.segment_word("playground") == std::vector<std::string>{"play", "ground"});
  CHECK(v.segment_word("playa") == std::vector<std::string>{"play", "a"});
  CHECK(greedy_decompose("xplayx", {"play"}) ==
        std::vector<std::string>{"x", "play", "x"});
  CHECK_THROWS_AS(build_mixed_units(corpus, 0), ConfigError);
}

TEST_CASE("mixed units keep multi-character leftovers as units") {
  Vocab v = build_mixed_units(Corpus({"cat cat cats cated"}), 2);
  CHECK(v.segment_word("cated") == std::vector<std::string>{"cat", "ed"});
  CHECK(v.contains("ed"));
  CHECK(v.segment_word("cats") == std::vector<std::string>{"cat", "s"});
}

TEST_CASE("tokenize and detokenize") {
  Vocab chars = build_character_vocab(Corpus({"ab"}));
  const auto ids = chars.tokenize("ab ab");
  const UnitId a = chars.id_of("a"), b = chars.id_of("b");
  CHECK(ids == std::vector<UnitId>{Vocab::kSos, a, b, Vocab::kSpace, a, b, Vocab::kEos});
  CHECK(chars.detokenize(ids) == "ab ab");

  Vocab wp = build_wordpiece(Corpus({"play play pl ay"}), 100);
  REQUIRE(wp.contains("pl"));
  REQUIRE(wp.contains("ay"));
  CHECK(wp.detokenize({Vocab::kSos, wp.id_of("pl"), wp.id_of("ay"), Vocab::kEos}) == "play");
  CHECK(chars.tokenize("abz")[3] == Vocab::kUnk);
}

TEST_CASE("unit character ids follow the spelling") {
  Vocab wp = build_wordpiece(Corpus({"hat hat hat"}), 10);
  const UnitId id = wp.id_of("hat");
  REQUIRE(id != Vocab::kUnk);
  CHECK(wp.char_ids(id) == std::vector<CharId>{CharInventory::id_of('h'),
                                               CharInventory::id_of('a'),
                                               CharInventory::id_of('t')});
  CHECK(wp.char_ids(Vocab::kSpace) == std::vector<CharId>{CharInventory::kSpace});
}

TEST_CASE("round trip on 1000 corpus lines for every vocabulary kind") {
  const SynthLanguage lang = default_synth_language(3);
  const SynthCorpus sc = synth_corpus(lang, 1000, 0, {}, 3);
  const auto lines = transcripts(sc.train);
  Corpus corpus(lines);
  for (const Vocab& v : {build_wordpiece(corpus, 40), build_mixed_units(corpus, 30),
                         build_mixed_units(corpus, 1000), build_character_vocab(corpus)}) {
    CAPTURE(to_string(v.kind()));
    for (const auto& line : lines) {
      const auto ids = v.tokenize(line);
      CHECK(std::find(ids.begin(), ids.end(), Vocab::kUnk) == ids.end());
      CHECK(v.detokenize(ids) == line);
    }
  }
}

TEST_CASE("vocab files round trip and reject corruption") {
  Corpus corpus({"cat cats cat hat hats"});
  for (const Vocab& v : {build_wordpiece(corpus, 15), build_mixed_units(corpus, 2),
                         build_character_vocab(corpus)}) {
    std::stringstream ss;
    v.write(ss);
    Vocab back = Vocab::read(ss);
    CHECK(back == v);
    CHECK(back.tokenize("cats hat") == v.tokenize("cats hat"));
  }
  std::stringstream bad("word-piece\t5\n0\t<sos>\t0\n");
  CHECK_THROWS_AS(Vocab::read(bad), DataError);
  std::stringstream empty;
  CHECK_THROWS_AS(Vocab::read(empty), DataError);
  CHECK_THROWS_AS(Vocab::load("/nonexistent/vocab.txt"), DataError);
}
