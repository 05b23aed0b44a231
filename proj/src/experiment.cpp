#include "caaed/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "caaed/decoding.hpp"
#include "caaed/error.hpp"

namespace caaed {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class SectionReader {
 public:
  SectionReader(const std::string& name,
                const std::map<std::string, std::string>& values)
      : name_(name), values_(values) {}

  ~SectionReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) {
        throw ConfigError("config: unknown key '" + key + "' in [" + name_ + "]");
      }
    }
  }

  const std::string* raw(const std::string& key) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  void size(const std::string& key, std::size_t& out) {
    if (const std::string* v = raw(key)) out = parse_size(key, *v);
  }
  void u64(const std::string& key, std::optional<std::uint64_t>& out) {
    if (const std::string* v = raw(key)) out = parse_size(key, *v);
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const std::string* v = raw(key)) out = parse_size(key, *v);
  }
  void real(const std::string& key, double& out) {
    if (const std::string* v = raw(key)) out = parse_real(key, *v);
  }

  std::size_t parse_size(const std::string& key, const std::string& v) const {
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) {
          return c >= '0' && c <= '9';
        })) {
      throw ConfigError("config: [" + name_ + "] " + key +
                        " expects a non-negative integer, got '" + v + "'");
    }
    return std::stoull(v);
  }
  double parse_real(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config: [" + name_ + "] " + key +
                        " expects a number, got '" + v + "'");
    }
  }

 private:
  std::string name_;
  const std::map<std::string, std::string>& values_;
  std::set<std::string> used_;
};

}  // namespace

IniSections parse_ini(const std::string& text) {
  IniSections out;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: malformed section header on line " +
                          std::to_string(line_no));
      }
      section = trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw ConfigError("config: expected 'key = value' inside a section on line " +
                        std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    if (out[section].count(key)) {
      throw ConfigError("config: duplicate key '" + key + "' in [" + section + "]");
    }
    out[section][key] = trim(line.substr(eq + 1));
  }
  return out;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  const IniSections ini = parse_ini(text);
  for (const auto& [name, values] : ini) {
    if (name == "data") {
      SectionReader r(name, values);
      r.u64("seed", c.data.seed);
      r.size("n_train", c.data.n_train);
      r.size("n_dev", c.data.n_dev);
      r.size("n_test", c.data.n_test);
      r.size("raw_dim", c.data.raw_dim);
      r.size("frames_per_char", c.data.frames_per_char);
      r.real("noise_std", c.data.noise_std);
      if (const auto* v = r.raw("stems")) c.data.stems = split_list(*v);
      if (const auto* v = r.raw("suffixes")) {
        c.data.suffixes.clear();
        for (auto& s : split_list(*v)) c.data.suffixes.push_back(s == "-" ? "" : s);
      }
      if (const auto* v = r.raw("suffix_weights")) {
        for (const auto& s : split_list(*v)) {
          c.data.suffix_weights.push_back(r.parse_real("suffix_weights", s));
        }
      }
      if (const auto* v = r.raw("holdout")) {
        for (const auto& item : split_list(*v)) {
          const auto plus = item.find('+');
          if (plus == std::string::npos) {
            throw ConfigError("config: holdout entries look like stem+suffix, got '" +
                              item + "'");
          }
          c.data.holdout.emplace_back(item.substr(0, plus), item.substr(plus + 1));
        }
      }
    } else if (name == "vocab") {
      SectionReader r(name, values);
      if (const auto* v = r.raw("kind")) c.vocab.kind = parse_vocab_kind(*v);
      r.size("target_size", c.vocab.target_size);
      r.size("threshold", c.vocab.threshold);
    } else if (name == "model") {
      SectionReader r(name, values);
      r.size("hidden", c.model.hidden);
      r.size("encoder_layers", c.model.encoder_layers);
      r.size("decoder_layers", c.model.decoder_layers);
      r.size("conv_taps", c.model.conv_taps);
      if (const auto* v = r.raw("embedding")) {
        c.model.embedding = parse_embedding_kind(*v);
      }
      r.size("char_embed_dim", c.model.char_embed_dim);
      r.size("char_rnn_layers", c.model.char_rnn_layers);
    } else if (name == "train") {
      SectionReader r(name, values);
      r.u64("seed", c.train_seed);
      r.real("learning_rate", c.train.learning_rate);
      r.real("beta1", c.train.beta1);
      r.real("beta2", c.train.beta2);
      r.real("adam_eps", c.train.adam_eps);
      r.real("clip_norm", c.train.clip_norm);
      r.size("batch_size", c.train.batch_size);
      r.size("epochs", c.train.epochs);
      r.real("sampling_start", c.train.sampling_start);
      r.real("sampling_end", c.train.sampling_end);
      r.size("sampling_ramp_epochs", c.train.sampling_ramp_epochs);
      r.real("label_smoothing", c.train.label_smoothing);
      r.real("dropout", c.train.dropout);
    } else if (name == "decode") {
      SectionReader r(name, values);
      r.size("max_len", c.max_decode_len);
    } else if (name == "compare") {
      SectionReader r(name, values);
      if (const auto* v = r.raw("seeds")) {
        c.compare_seeds.clear();
        for (const auto& s : split_list(*v)) {
          c.compare_seeds.push_back(r.parse_size("seeds", s));
        }
      }
    } else {
      throw ConfigError("config: unknown section [" + name + "]");
    }
  }
  if (c.train_seed) c.train.seed = *c.train_seed;
  c.train.max_decode_len = c.max_decode_len;
  c.train.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::require_seeds() const {
  if (!data.seed) throw ConfigError("config: [data] seed is required");
  if (!train_seed) throw ConfigError("config: [train] seed is required");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  auto join = [](const auto& items, auto fmt) {
    std::string out;
    for (const auto& x : items) {
      if (!out.empty()) out += ", ";
      out += fmt(x);
    }
    return out;
  };
  os << "[data]\n";
  if (data.seed) os << "seed = " << *data.seed << '\n';
  os << "n_train = " << data.n_train << "\nn_dev = " << data.n_dev
     << "\nn_test = " << data.n_test << "\nraw_dim = " << data.raw_dim
     << "\nframes_per_char = " << data.frames_per_char
     << "\nnoise_std = " << data.noise_std << '\n';
  if (!data.stems.empty()) {
    os << "stems = " << join(data.stems, [](const std::string& s) { return s; }) << '\n';
  }
  if (!data.suffixes.empty()) {
    os << "suffixes = "
       << join(data.suffixes,
               [](const std::string& s) { return s.empty() ? std::string("-") : s; })
       << '\n';
  }
  if (!data.holdout.empty()) {
    os << "holdout = "
       << join(data.holdout,
               [](const HoldoutPair& p) { return p.first + "+" + p.second; })
       << '\n';
  }
  os << "\n[vocab]\nkind = " << to_string(vocab.kind)
     << "\ntarget_size = " << vocab.target_size
     << "\nthreshold = " << vocab.threshold << "\n\n[model]\nhidden = "
     << model.hidden << "\nencoder_layers = " << model.encoder_layers
     << "\ndecoder_layers = " << model.decoder_layers
     << "\nconv_taps = " << model.conv_taps
     << "\nembedding = " << to_string(model.embedding)
     << "\nchar_embed_dim = " << model.char_embed_dim
     << "\nchar_rnn_layers = " << model.char_rnn_layers << "\n\n[train]\n";
  if (train_seed) os << "seed = " << *train_seed << '\n';
  os << "learning_rate = " << train.learning_rate
     << "\nbatch_size = " << train.batch_size << "\nepochs = " << train.epochs
     << "\nlabel_smoothing = " << train.label_smoothing
     << "\ndropout = " << train.dropout << "\n\n[decode]\nmax_len = "
     << max_decode_len << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

SynthLanguage make_language(const DataSection& data, std::uint64_t seed) {
  SynthLanguage base = default_synth_language(seed);
  std::vector<std::string> stems = data.stems.empty() ? base.stems : data.stems;
  std::vector<std::string> suffixes =
      data.suffixes.empty() ? base.suffixes : data.suffixes;
  SynthLanguage lang = make_synth_language(std::move(stems), std::move(suffixes),
                                           seed, data.raw_dim,
                                           data.frames_per_char, data.noise_std);
  if (!data.suffix_weights.empty()) {
    lang.suffix_weights = data.suffix_weights;
  } else if (data.suffixes.empty()) {
    lang.suffix_weights = base.suffix_weights;
  }
  return lang;
}

std::size_t inflection_threshold(const Corpus& corpus,
                                 const SynthLanguage& language) {
  const std::set<std::string> stems(language.stems.begin(),
                                    language.stems.end());
  std::size_t max_inflected = 0;
  for (const auto& [word, count] : corpus.word_counts()) {
    if (!stems.count(word)) max_inflected = std::max(max_inflected, count);
  }
  return max_inflected + 1;
}

Vocab build_vocab(const VocabSection& section, const Corpus& corpus,
                  const SynthLanguage* language) {
  switch (section.kind) {
    case VocabKind::WordPiece:
      return build_wordpiece(corpus, section.target_size);
    case VocabKind::Character:
      return build_character_vocab(corpus);
    case VocabKind::MixedUnit: {
      std::size_t threshold = section.threshold;
      if (threshold == 0) {
        if (language == nullptr) {
          throw ConfigError("vocab: automatic mixed-unit threshold needs a synthetic language");
        }
        threshold = inflection_threshold(corpus, *language);
      }
      return build_mixed_units(corpus, threshold);
    }
  }
  throw ConfigError("vocab: unknown kind");
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  SynthLanguage lang = make_language(config.data, seed);
  SynthCorpus corpus =
      synth_corpus(lang, config.data.n_train + config.data.n_dev,
                   config.data.n_test, config.data.holdout, seed);
  std::vector<Utterance> dev(corpus.train.end() - config.data.n_dev,
                             corpus.train.end());
  corpus.train.resize(config.data.n_train);
  Corpus text(transcripts(corpus.train));
  Vocab vocab = build_vocab(config.vocab, text, &lang);
  PreparedData out{std::move(lang), std::move(corpus.train), std::move(dev),
                   std::move(corpus.test), std::move(vocab)};
  assign_labels(out.train, out.vocab);
  assign_labels(out.dev, out.vocab);
  assign_labels(out.test, out.vocab);
  return out;
}

ModelConfig resolve_model_config(const ExperimentConfig& config,
                                 const PreparedData& data,
                                 EmbeddingKind embedding) {
  ModelConfig m = config.model;
  m.input_dim = data.language.feature_dim();
  m.vocab_size = data.vocab.size();
  m.num_chars = CharInventory::size();
  m.embedding = embedding;
  return m;
}

SystemResult run_system(const ExperimentConfig& config,
                        const PreparedData& data, EmbeddingKind embedding,
                        std::uint64_t seed, std::ostream* log) {
  ModelConfig mc = resolve_model_config(config, data, embedding);
  Model model = Model::create(mc, data.vocab, seed);
  TrainConfig tc = config.train;
  tc.seed = seed;
  TrainHooks hooks;
  hooks.log = log;
  SystemResult r;
  r.embedding = embedding;
  r.counts = count_parameters(mc);
  r.training = train(model, data.vocab, data.train, data.dev, tc, hooks);
  r.dev_wer = r.training.best_dev_wer;

  const auto hyps = decode_all(model, data.vocab, data.test, tc.max_decode_len);
  WerResult total;
  std::vector<std::string> refs, texts;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    total += wer(data.test[i].transcript, hyps[i].text);
    refs.push_back(data.test[i].transcript);
    texts.push_back(hyps[i].text);
  }
  r.test_wer = total.rate();
  std::vector<std::string> held;
  for (const auto& [stem, suffix] : config.data.holdout) held.push_back(stem + suffix);
  r.heldout_accuracy = word_accuracy(refs, texts, held);
  return r;
}

std::vector<CompareRow> run_compare(const ExperimentConfig& config,
                                    std::ostream* progress) {
  if (config.compare_seeds.size() < 3) {
    throw ConfigError("compare: at least 3 seeds are required");
  }
  std::vector<CompareRow> rows;
  for (std::uint64_t seed : config.compare_seeds) {
    // Both systems see identical data, vocabulary, seeds and
    // hyperparameters; only the embedding provider differs.
    PreparedData data = prepare_data(config, seed);
    CompareRow row;
    row.seed = seed;
    row.lookup = run_system(config, data, EmbeddingKind::Lookup, seed);
    row.char_aware = run_system(config, data, EmbeddingKind::CharAware, seed);
    if (progress != nullptr) {
      *progress << "seed " << seed << " done\n";
      progress->flush();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string format_compare(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  char buf[512];
  os << "seed\tWER_AED\tWER_CAAED\tWERR(%)\tNp_AED\tNp_CAAED\tPRR(%)"
        "\theldout_acc_AED\theldout_acc_CAAED\n";
  std::vector<double> wa, wc, ha, hc;
  for (const CompareRow& r : rows) {
    const double a = r.lookup.test_wer * 100.0;
    const double c = r.char_aware.test_wer * 100.0;
    const double werr = a > 0.0 ? (a - c) / a * 100.0 : 0.0;
    std::snprintf(buf, sizeof buf, "%llu\t%.2f\t%.2f\t%.1f\t%zu\t%zu\t%.1f\t%.3f\t%.3f\n",
                  static_cast<unsigned long long>(r.seed), a, c, werr,
                  r.lookup.counts.total(), r.char_aware.counts.total(),
                  parameter_reduction_rate(r.lookup.counts, r.char_aware.counts),
                  r.lookup.heldout_accuracy, r.char_aware.heldout_accuracy);
    os << buf;
    wa.push_back(a);
    wc.push_back(c);
    ha.push_back(r.lookup.heldout_accuracy);
    hc.push_back(r.char_aware.heldout_accuracy);
  }
  if (!rows.empty()) {
    const double a = median(wa);
    const double c = median(wc);
    std::snprintf(buf, sizeof buf, "median\t%.2f\t%.2f\t%.1f\t%zu\t%zu\t%.1f\t%.3f\t%.3f\n",
                  a, c, a > 0.0 ? (a - c) / a * 100.0 : 0.0,
                  rows.front().lookup.counts.total(),
                  rows.front().char_aware.counts.total(),
                  parameter_reduction_rate(rows.front().lookup.counts,
                                           rows.front().char_aware.counts),
                  median(ha), median(hc));
    os << buf;
  }
  return os.str();
}

std::string format_parameter_report(const ModelConfig& lookup,
                                    const ModelConfig& char_aware) {
  const ParameterCounts a = count_parameters(lookup);
  const ParameterCounts c = count_parameters(char_aware);
  std::ostringstream os;
  char buf[256];
  os << "component\tAED\tCA-AED\n";
  auto line = [&](const char* name, std::size_t x, std::size_t y) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%zu\n", name, x, y);
    os << buf;
  };
  line("encoder", a.encoder, c.encoder);
  line("attention", a.attention, c.attention);
  line("decoder", a.decoder, c.decoder);
  line("output", a.output, c.output);
  line("embedding", a.embedding, c.embedding);
  line("total", a.total(), c.total());
  std::snprintf(buf, sizeof buf, "savings\t%zu\t(%.2f M)\nPRR(%%)\t%.1f\n",
                a.total() - c.total(),
                static_cast<double>(a.total() - c.total()) / 1e6,
                parameter_reduction_rate(a, c));
  os << buf;
  return os.str();
}

ModelGradCheck gradcheck_reference(EmbeddingKind embedding, std::uint64_t seed) {
  PrecisionGuard precision64(Precision::Float64);
  const Vocab vocab = build_character_vocab(Corpus({"ab"}));
  ModelConfig mc;
  mc.input_dim = 6;
  mc.hidden = 4;
  mc.encoder_layers = 2;
  mc.decoder_layers = 2;
  mc.conv_taps = 3;
  mc.vocab_size = vocab.size();
  mc.embedding = embedding;
  mc.num_chars = CharInventory::size();
  mc.char_embed_dim = 3;
  mc.char_rnn_layers = 2;
  Model model = Model::create(mc, vocab, seed);
  // Unit gains hide layer-norm gain errors behind symmetric values.
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (auto& [name, t] : model.parameters()) {
    for (double& v : t.mutable_data()) v += 0.1 * jitter(rng);
  }

  Utterance utt;
  utt.features = FeatureMatrix(2, mc.input_dim);
  for (float& f : utt.features.values) f = static_cast<float>(jitter(rng));
  utt.labels = vocab.tokenize("ab");  // <sos> a b <eos>
  utt.labels.erase(utt.labels.begin() + 2);  // <sos> a <eos>

  std::vector<Tensor> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);
  auto loss = [&] {
    return forward_utterance(model, utt, 0.0, 0.1, {}).loss;
  };
  GradCheckResult r = grad_check(loss, params, 1e-5);

  // Gradients of the fixed projections, were they to receive any.
  bool untouched = true;
  {
    Tape tape;
    Tensor l = loss();
    tape.backward(l);
    const Attention& att = model.attention();
    for (const Tensor* w : {&att.encoder_projection(), &att.state_projection(),
                            &att.location_projection()}) {
      untouched = untouched && !w->requires_grad() && !w->has_grad();
    }
    model.parameters().zero_grad();
  }
  return {r.max_relative_error, r.coordinates, untouched};
}

}  // namespace caaed
