// Command-line front end: caaed <subcommand> [options]. Run with --help for
// the list of subcommands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "caaed/decoding.hpp"
#include "caaed/error.hpp"
#include "caaed/experiment.hpp"

namespace fs = std::filesystem;
using namespace caaed;

namespace {

constexpr double kGradTolerance = 1e-4;

std::string data_file(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

struct Options {
  std::string config;
  std::string corpus;
  std::string out;
  std::string data_dir;
  std::string vocab;
  std::string model;
  std::string data;
  std::string hyps;
  std::string log;
  std::string embedding;
  std::string heldout;
  bool no_time = false;
  bool paper = false;
  std::size_t max_len = 0;
  std::uint64_t seed = 7;
};

int cmd_build_vocab(const Options& o) {
  const ExperimentConfig config = ExperimentConfig::load(o.config);
  const Corpus corpus = Corpus::from_file(o.corpus);
  // Only the stem list matters for the automatic threshold.
  const SynthLanguage lang = make_language(config.data, config.data.seed.value_or(0));
  const Vocab vocab = build_vocab(config.vocab, corpus, &lang);
  vocab.save(o.out);
  std::cout << to_string(vocab.kind()) << " vocabulary: " << vocab.size()
            << " units\n";
  return 0;
}

int cmd_synth_data(const Options& o) {
  const ExperimentConfig config = ExperimentConfig::load(o.config);
  if (!config.data.seed) throw ConfigError("config: [data] seed is required");
  const PreparedData data = prepare_data(config, *config.data.seed);
  fs::create_directories(o.out);
  save_dataset(data_file(o.out, "train.bin"), data.train);
  save_dataset(data_file(o.out, "dev.bin"), data.dev);
  save_dataset(data_file(o.out, "test.bin"), data.test);
  save_lines(data_file(o.out, "train.txt"), transcripts(data.train));
  data.vocab.save(data_file(o.out, "vocab.txt"));
  std::cout << "train " << data.train.size() << ", dev " << data.dev.size()
            << ", test " << data.test.size() << " utterances; "
            << data.vocab.size() << " units\n";
  return 0;
}

Vocab load_vocab_for(const Options& o, const std::string& fallback_dir) {
  return Vocab::load(!o.vocab.empty() ? o.vocab
                                      : data_file(fallback_dir, "vocab.txt"));
}

int cmd_train(const Options& o) {
  const ExperimentConfig config = ExperimentConfig::load(o.config);
  config.require_seeds();
  const Vocab vocab = load_vocab_for(o, o.data_dir);
  std::vector<Utterance> train_set = load_dataset(data_file(o.data_dir, "train.bin"));
  std::vector<Utterance> dev_set = load_dataset(data_file(o.data_dir, "dev.bin"));
  if (!o.vocab.empty()) {
    assign_labels(train_set, vocab);
    assign_labels(dev_set, vocab);
  }
  if (train_set.empty()) throw DataError("train: empty training set");

  ModelConfig mc = config.model;
  if (!o.embedding.empty()) mc.embedding = parse_embedding_kind(o.embedding);
  mc.input_dim = train_set.front().features.cols;
  mc.vocab_size = vocab.size();
  mc.num_chars = CharInventory::size();
  Model model = Model::create(mc, vocab, *config.train_seed);

  std::ofstream log_file;
  TrainHooks hooks;
  if (!o.log.empty()) {
    log_file = open_out(o.log);
    hooks.log = &log_file;
  }
  hooks.log_wall_time = !o.no_time;
  const TrainResult r = train(model, vocab, train_set, dev_set, config.train, hooks);
  model.save(o.out);
  std::printf("best epoch %zu, dev WER %.4f\n", r.best_epoch, r.best_dev_wer);
  return 0;
}

int cmd_decode(const Options& o) {
  const Vocab vocab = Vocab::load(o.vocab);
  const Model model = Model::load(o.model, vocab);
  std::vector<Utterance> data = load_dataset(o.data);
  std::size_t max_len = kDefaultMaxDecodeLength;
  if (!o.config.empty()) max_len = ExperimentConfig::load(o.config).max_decode_len;
  if (o.max_len > 0) max_len = o.max_len;
  const auto hyps = decode_all(model, vocab, data, max_len);
  std::vector<HypothesisRecord> records;
  WerResult total;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const WerResult w = wer(data[i].transcript, hyps[i].text);
    total += w;
    records.push_back({i, w.rate(), data[i].transcript, hyps[i].text});
  }
  write_hypotheses(o.out, records);
  std::printf("decoded %zu utterances, WER %.4f\n", data.size(), total.rate());
  return 0;
}

int cmd_score(const Options& o) {
  const auto records = read_hypotheses(o.hyps);
  const WerResult w = score_records(records);
  std::printf("WER %.4f (%zu errors / %zu words: %zu sub, %zu del, %zu ins)\n",
              w.rate(), w.errors(), w.ref_words, w.substitutions, w.deletions,
              w.insertions);
  if (!o.heldout.empty()) {
    std::vector<std::string> refs, hyps;
    for (const auto& r : records) {
      refs.push_back(r.reference);
      hyps.push_back(r.hypothesis);
    }
    std::vector<std::string> words;
    std::stringstream ss(o.heldout);
    for (std::string w; std::getline(ss, w, ',');) words.push_back(w);
    std::printf("held-out word accuracy %.4f\n", word_accuracy(refs, hyps, words));
  }
  return 0;
}

int cmd_count_params(const Options& o) {
  if (o.paper) {
    struct Row {
      const char* wsu;
      std::size_t vocab;
      std::size_t layers;
    };
    for (const Row& row : {Row{"word-piece", kPaperWordPieces, 4},
                           Row{"word-piece", kPaperWordPieces, 6},
                           Row{"mixed-unit", kPaperMixedUnits, 4},
                           Row{"mixed-unit", kPaperMixedUnits, 6}}) {
      std::cout << "# " << row.wsu << ", " << row.vocab << " units, N_e = "
                << row.layers << '\n'
                << format_parameter_report(
                       paper_config(row.vocab, row.layers, EmbeddingKind::Lookup),
                       paper_config(row.vocab, row.layers, EmbeddingKind::CharAware))
                << '\n';
    }
    return 0;
  }
  if (o.config.empty() || o.vocab.empty()) {
    throw UsageError("count-params: give --paper, or --config with --vocab");
  }
  const ExperimentConfig config = ExperimentConfig::load(o.config);
  const Vocab vocab = Vocab::load(o.vocab);
  ModelConfig mc = config.model;
  mc.input_dim = config.data.raw_dim * SynthLanguage{}.stack_factor;
  mc.vocab_size = vocab.size();
  mc.num_chars = CharInventory::size();
  ModelConfig lookup = mc;
  lookup.embedding = EmbeddingKind::Lookup;
  ModelConfig ca = mc;
  ca.embedding = EmbeddingKind::CharAware;
  std::cout << format_parameter_report(lookup, ca);
  return 0;
}

int cmd_gradcheck(const Options& o) {
  std::vector<EmbeddingKind> kinds = {EmbeddingKind::Lookup, EmbeddingKind::CharAware};
  if (!o.embedding.empty()) kinds = {parse_embedding_kind(o.embedding)};
  bool ok = true;
  for (EmbeddingKind kind : kinds) {
    const ModelGradCheck g = gradcheck_reference(kind, o.seed);
    const bool pass = g.max_relative_error < kGradTolerance && g.fixed_projections_untouched;
    std::printf("%s: %zu coordinates, max relative error %.3e, fixed projections %s: %s\n",
                to_string(kind).c_str(), g.coordinates, g.max_relative_error,
                g.fixed_projections_untouched ? "untouched" : "MODIFIED",
                pass ? "ok" : "FAILED");
    ok = ok && pass;
  }
  if (!ok) throw NumericError("gradcheck: finite-difference check failed");
  return 0;
}

int cmd_compare(const Options& o) {
  const ExperimentConfig config = ExperimentConfig::load(o.config);
  config.require_seeds();
  const auto rows = run_compare(config, &std::cerr);
  const std::string table = format_compare(rows);
  std::cout << table;
  if (!o.out.empty()) open_out(o.out) << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention encoder-decoder speech recognition with char-aware embeddings"};
  app.require_subcommand(1);
  Options o;

  auto* build_vocab_cmd = app.add_subcommand("build-vocab", "Build a vocabulary from a text corpus");
  build_vocab_cmd->add_option("--config", o.config, "Experiment config")->required();
  build_vocab_cmd->add_option("--corpus", o.corpus, "One transcript per line")->required();
  build_vocab_cmd->add_option("--out", o.out, "Vocabulary file")->required();

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic corpus and its vocabulary");
  synth->add_option("--config", o.config, "Experiment config")->required();
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", o.config, "Experiment config")->required();
  train_cmd->add_option("--data", o.data_dir, "Directory written by synth-data")->required();
  train_cmd->add_option("--vocab", o.vocab, "Vocabulary (default: <data>/vocab.txt)");
  train_cmd->add_option("--embedding", o.embedding, "lookup or char-aware (default: config)");
  train_cmd->add_option("--out", o.out, "Checkpoint file")->required();
  train_cmd->add_option("--log", o.log, "Per-epoch log file");
  train_cmd->add_flag("--no-time", o.no_time, "Leave wall-clock times out of the log");

  auto* decode = app.add_subcommand("decode", "Greedy-decode a dataset");
  decode->add_option("--model", o.model, "Checkpoint")->required();
  decode->add_option("--vocab", o.vocab, "Vocabulary")->required();
  decode->add_option("--data", o.data, "Dataset file")->required();
  decode->add_option("--out", o.out, "Hypothesis file")->required();
  decode->add_option("--config", o.config, "Experiment config for [decode] max_len");
  decode->add_option("--max-len", o.max_len, "Override the maximum output length");

  auto* score = app.add_subcommand("score", "Word error rate of a hypothesis file");
  score->add_option("--hyps", o.hyps, "Hypothesis file")->required();
  score->add_option("--heldout", o.heldout, "Comma-separated words for word accuracy");

  auto* count = app.add_subcommand("count-params", "Per-component parameter counts and PRR");
  count->add_flag("--paper", o.paper, "Use the full-size configurations");
  count->add_option("--config", o.config, "Experiment config");
  count->add_option("--vocab", o.vocab, "Vocabulary");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check on a tiny model");
  grad->add_option("--embedding", o.embedding, "lookup or char-aware (default: both)");
  grad->add_option("--seed", o.seed, "Initialization seed");

  auto* compare = app.add_subcommand("compare", "Train both systems over several seeds");
  compare->add_option("--config", o.config, "Experiment config")->required();
  compare->add_option("--out", o.out, "Also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "caaed: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*build_vocab_cmd) return cmd_build_vocab(o);
    if (*synth) return cmd_synth_data(o);
    if (*train_cmd) return cmd_train(o);
    if (*decode) return cmd_decode(o);
    if (*score) return cmd_score(o);
    if (*count) return cmd_count_params(o);
    if (*grad) return cmd_gradcheck(o);
    if (*compare) return cmd_compare(o);
  } catch (const Error& e) {
    std::cerr << "caaed: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "caaed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "caaed: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
