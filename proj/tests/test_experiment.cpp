#include "caaed/error.hpp"
#include "caaed/experiment.hpp"
#include "doctest.h"

using namespace caaed;

TEST_CASE("ini parsing") {
  const auto ini = parse_ini("# comment\n[a]\nx = 1 # trailing\n y=two words \n\n[b]\n");
  CHECK(ini.at("a").at("x") == "1");
  CHECK(ini.at("a").at("y") == "two words");
  CHECK(ini.at("b").empty());
  CHECK_THROWS_AS(parse_ini("x = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_ini("[a\n"), ConfigError);
  CHECK_THROWS_AS(parse_ini("[a]\nnot a pair\n"), ConfigError);
  CHECK_THROWS_AS(parse_ini("[a]\nx = 1\nx = 2\n"), ConfigError);
}

TEST_CASE("experiment config defaults and overrides") {
  const ExperimentConfig c = ExperimentConfig::parse(
      "[data]\nseed = 4\nsuffixes = -, s\nsuffix_weights = 3, 1\nholdout = cat+s\n"
      "[vocab]\nkind = mixed-unit\n[model]\nhidden = 16\nembedding = char-aware\n"
      "[train]\nseed = 9\nepochs = 3\n[decode]\nmax_len = 50\n[compare]\nseeds = 5, 6, 7\n");
  CHECK(c.data.seed == 4u);
  CHECK(c.data.suffixes == std::vector<std::string>{"", "s"});
  CHECK(c.data.suffix_weights == std::vector<double>{3, 1});
  CHECK(c.data.holdout == std::vector<HoldoutPair>{{"cat", "s"}});
  CHECK(c.data.n_train == 200);
  CHECK(c.vocab.kind == VocabKind::MixedUnit);
  CHECK(c.model.hidden == 16);
  CHECK(c.model.embedding == EmbeddingKind::CharAware);
  CHECK(c.train.seed == 9u);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.max_decode_len == 50);
  CHECK(c.compare_seeds == std::vector<std::uint64_t>{5, 6, 7});
  CHECK_NOTHROW(c.require_seeds());

  const ExperimentConfig again = ExperimentConfig::parse(c.to_text());
  CHECK(again.data.holdout == c.data.holdout);
  CHECK(again.data.suffixes == c.data.suffixes);
  CHECK(again.model == c.model);
  CHECK(again.train_seed == c.train_seed);
}

TEST_CASE("experiment config rejects unknown and malformed entries") {
  CHECK_THROWS_AS(ExperimentConfig::parse("[data]\nsede = 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[extra]\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nepochs = many\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nlearning_rate = 1e-3x\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nsampling_end = 0.9\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[data]\nholdout = cats\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[vocab]\nkind = bytes\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[data]\nseed = 1\n").require_seeds(), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[train]\nseed = 1\n").require_seeds(), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent.ini"), DataError);
}

TEST_CASE("prepared data is labeled, split and deterministic") {
  const ExperimentConfig c = ExperimentConfig::parse(
      "[data]\nseed = 1\nn_train = 30\nn_dev = 5\nn_test = 7\nholdout = cat+s\n"
      "[vocab]\nkind = mixed-unit\n[train]\nseed = 1\n");
  const PreparedData a = prepare_data(c, 1);
  const PreparedData b = prepare_data(c, 1);
  CHECK(a.train.size() == 30);
  CHECK(a.dev.size() == 5);
  CHECK(a.test.size() == 7);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.vocab == b.vocab);
  for (const auto* set : {&a.train, &a.dev, &a.test}) {
    for (const Utterance& u : *set) {
      CHECK(u.labels.front() == Vocab::kSos);
      CHECK(u.labels.back() == Vocab::kEos);
      CHECK(a.vocab.detokenize(u.labels) == u.transcript);
    }
  }
  // The automatic threshold keeps inflected forms out of the whole-word units.
  CHECK(a.vocab.contains("cat"));
  CHECK_FALSE(a.vocab.contains("cats"));
  CHECK(a.vocab.segment_word("cats") == std::vector<std::string>{"cat", "s"});
}

TEST_CASE("inflection threshold sits above every inflected count") {
  const SynthLanguage lang = make_synth_language({"cat", "dog"}, {"", "s"}, 1);
  const Corpus corpus({"cat cat cat cats cats dog dog dog dogs"});
  CHECK(inflection_threshold(corpus, lang) == 3);
}

TEST_CASE("median and comparison table") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(median({}) == 0.0);

  CompareRow row;
  row.seed = 1;
  row.lookup.test_wer = 0.10;
  row.char_aware.test_wer = 0.08;
  row.lookup.counts = {100, 0, 0, 0, 50};
  row.char_aware.counts = {100, 0, 0, 0, 25};
  row.lookup.heldout_accuracy = 0.5;
  row.char_aware.heldout_accuracy = 0.75;
  const std::string table = format_compare({row});
  CHECK(table.find("1\t10.00\t8.00\t20.0\t150\t125\t16.7\t0.500\t0.750\n") != std::string::npos);
  CHECK(table.find("median\t10.00\t8.00\t20.0") != std::string::npos);
}

TEST_CASE("parameter report lists every component") {
  const std::string r = format_parameter_report(
      paper_config(kPaperWordPieces, 4, EmbeddingKind::Lookup),
      paper_config(kPaperWordPieces, 4, EmbeddingKind::CharAware));
  for (const char* key : {"encoder", "attention", "decoder", "output", "embedding", "total",
                          "savings\t12182016", "PRR(%)"}) {
    CHECK(r.find(key) != std::string::npos);
  }
}

TEST_CASE("reference gradient check of the full loss") {
  for (EmbeddingKind kind : {EmbeddingKind::Lookup, EmbeddingKind::CharAware}) {
    const ModelGradCheck g = gradcheck_reference(kind);
    CHECK(g.coordinates > 100);
    CHECK(g.max_relative_error < 1e-4);
    CHECK(g.fixed_projections_untouched);
  }
}
