#include "caaed/data.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "caaed/error.hpp"

namespace caaed {

FeatureMatrix stack_frames(const FeatureMatrix& raw, std::size_t factor) {
  if (factor < 1) throw ConfigError("stack_frames: factor must be >= 1");
  if (raw.rows < 1) throw DataError("stack_frames: no input frames");
  const std::size_t out_rows = (raw.rows + factor - 1) / factor;
  FeatureMatrix out(out_rows, raw.cols * factor);
  for (std::size_t r = 0; r < raw.rows; ++r) {
    const std::size_t dst = r / factor;
    const std::size_t offset = (r % factor) * raw.cols;
    std::copy_n(raw.values.begin() + r * raw.cols, raw.cols,
                out.values.begin() + dst * out.cols + offset);
  }
  return out;
}

void assign_labels(std::vector<Utterance>& utterances, const Vocab& vocab) {
  for (Utterance& u : utterances) u.labels = vocab.tokenize(u.transcript);
}

std::vector<std::string> transcripts(const std::vector<Utterance>& utterances) {
  std::vector<std::string> out;
  out.reserve(utterances.size());
  for (const Utterance& u : utterances) out.push_back(u.transcript);
  return out;
}

// ---------------------------------------------------------------------------

SynthLanguage make_synth_language(std::vector<std::string> stems,
                                  std::vector<std::string> suffixes,
                                  std::uint64_t seed, std::size_t raw_dim,
                                  std::size_t frames_per_char,
                                  double noise_std) {
  if (stems.empty() || suffixes.empty()) {
    throw ConfigError("synth language: need at least one stem and suffix");
  }
  if (raw_dim < 1 || frames_per_char < 1 || noise_std < 0.0) {
    throw ConfigError("synth language: invalid feature parameters");
  }
  for (const auto* list : {&stems, &suffixes}) {
    for (const std::string& s : *list) {
      for (char c : s) {
        if (!CharInventory::contains(c)) {
          throw ConfigError("synth language: '" + s +
                            "' uses a character outside the inventory");
        }
      }
    }
  }
  SynthLanguage lang;
  lang.stems = std::move(stems);
  lang.suffixes = std::move(suffixes);
  lang.raw_dim = raw_dim;
  lang.frames_per_char = frames_per_char;
  lang.noise_std = noise_std;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  lang.prototypes.resize(CharInventory::size());
  for (auto& proto : lang.prototypes) {
    proto.resize(raw_dim);
    for (float& x : proto) x = static_cast<float>(gauss(rng));
  }
  return lang;
}

SynthLanguage default_synth_language(std::uint64_t seed) {
  SynthLanguage lang = make_synth_language(
      {"cat", "hat", "bat", "mat", "dog", "log", "fog", "hog", "pen", "hen",
       "den", "ten"},
      {"", "s", "ed", "ing"}, seed);
  lang.suffix_weights = {4.0, 1.0, 1.0, 1.0};
  return lang;
}

FeatureMatrix render_features(const SynthLanguage& lang,
                              const std::string& transcript,
                              std::uint64_t seed) {
  std::vector<CharId> chars;
  for (const std::string& w : split_words(transcript)) {
    if (!chars.empty()) chars.push_back(CharInventory::kSpace);
    for (char c : w) chars.push_back(CharInventory::id_of(c));
  }
  if (chars.empty()) chars.push_back(CharInventory::kSpace);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  FeatureMatrix raw(chars.size() * lang.frames_per_char, lang.raw_dim);
  std::size_t r = 0;
  for (CharId c : chars) {
    const auto& proto = lang.prototypes.at(c);
    for (std::size_t k = 0; k < lang.frames_per_char; ++k, ++r) {
      for (std::size_t d = 0; d < lang.raw_dim; ++d) {
        raw(r, d) = static_cast<float>(proto[d] + lang.noise_std * noise(rng));
      }
    }
  }
  return stack_frames(raw, lang.stack_factor);
}

namespace {

void check_holdout(const SynthLanguage& lang,
                   const std::set<HoldoutPair>& holdout) {
  auto has = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  for (const auto& [stem, suffix] : holdout) {
    if (!has(lang.stems, stem) || !has(lang.suffixes, suffix)) {
      throw ConfigError("synth_corpus: held-out pair (" + stem + ", " +
                        suffix + ") is not a word of the language");
    }
    const bool stem_elsewhere = std::any_of(
        lang.suffixes.begin(), lang.suffixes.end(), [&](const std::string& x) {
          return x != suffix && !holdout.count({stem, x});
        });
    const bool suffix_elsewhere = std::any_of(
        lang.stems.begin(), lang.stems.end(), [&](const std::string& s) {
          return s != stem && !holdout.count({s, suffix});
        });
    if (!stem_elsewhere || !suffix_elsewhere) {
      throw ConfigError("synth_corpus: holding out (" + stem + ", " + suffix +
                        ") leaves its stem or suffix unseen in training");
    }
  }
}

}  // namespace

SynthCorpus synth_corpus(const SynthLanguage& lang, std::size_t n_train,
                         std::size_t n_test,
                         const std::vector<HoldoutPair>& holdout,
                         std::uint64_t seed) {
  const std::set<HoldoutPair> held(holdout.begin(), holdout.end());
  check_holdout(lang, held);
  if (!lang.suffix_weights.empty() &&
      lang.suffix_weights.size() != lang.suffixes.size()) {
    throw ConfigError("synth_corpus: suffix weight count mismatch");
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_stem(0, lang.stems.size() - 1);
  std::vector<double> weights = lang.suffix_weights;
  if (weights.empty()) weights.assign(lang.suffixes.size(), 1.0);
  std::discrete_distribution<std::size_t> pick_suffix(weights.begin(),
                                                      weights.end());
  std::uniform_int_distribution<std::size_t> pick_length(2, 6);

  auto sample_word = [&](bool allow_held) {
    while (true) {
      const std::string& stem = lang.stems[pick_stem(rng)];
      const std::string& suffix = lang.suffixes[pick_suffix(rng)];
      if (allow_held || !held.count({stem, suffix})) return stem + suffix;
    }
  };
  auto render = [&](std::vector<std::string> words) {
    Utterance u;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) u.transcript.push_back(' ');
      u.transcript += words[i];
    }
    u.features = render_features(lang, u.transcript, rng());
    return u;
  };

  SynthCorpus out;
  for (std::size_t n = 0; n < n_train; ++n) {
    std::vector<std::string> words(pick_length(rng));
    for (auto& w : words) w = sample_word(false);
    out.train.push_back(render(std::move(words)));
  }
  for (std::size_t n = 0; n < n_test; ++n) {
    std::vector<std::string> words(pick_length(rng));
    for (auto& w : words) w = sample_word(true);
    if (!holdout.empty()) {
      const auto& [stem, suffix] = holdout[n % holdout.size()];
      std::uniform_int_distribution<std::size_t> pos(0, words.size() - 1);
      words[pos(rng)] = stem + suffix;
    }
    out.test.push_back(render(std::move(words)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary dataset files

namespace {

constexpr std::array<char, 6> kMagic = {'C', 'A', 'A', 'E', 'D', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

std::uint32_t need_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(is, v)) {
    throw DataError(std::string("dataset: truncated record (") + what + ")");
  }
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) {
    throw DataError(std::string("dataset: ") + what + " exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_dataset(std::ostream& os, const std::vector<Utterance>& utterances) {
  os.write(kMagic.data(), kMagic.size());
  for (const Utterance& u : utterances) {
    put_u32(os, checked_u32(u.features.rows, "frame count"));
    put_u32(os, checked_u32(u.features.cols, "dimension"));
    for (float f : u.features.values) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(os, bits);
    }
    put_u32(os, checked_u32(u.labels.size(), "label count"));
    for (UnitId id : u.labels) put_u32(os, id);
    put_u32(os, checked_u32(u.transcript.size(), "transcript length"));
    os.write(u.transcript.data(),
             static_cast<std::streamsize>(u.transcript.size()));
  }
}

std::vector<Utterance> read_dataset(std::istream& is) {
  std::array<char, 6> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("dataset: bad magic (expected CAAED1)");
  }
  std::vector<Utterance> out;
  std::size_t dim = 0;
  while (true) {
    std::uint32_t frames = 0;
    if (!get_u32(is, frames)) {
      if (is.gcount() != 0) throw DataError("dataset: truncated record");
      break;
    }
    Utterance u;
    const std::uint32_t d = need_u32(is, "dimension");
    if (frames == 0 || d == 0) {
      throw DataError("dataset: empty feature matrix in record " +
                      std::to_string(out.size()));
    }
    if (dim != 0 && d != dim) {
      throw DataError("dataset: record " + std::to_string(out.size()) +
                      " has dimension " + std::to_string(d) + ", expected " +
                      std::to_string(dim));
    }
    dim = d;
    u.features = FeatureMatrix(frames, d);
    for (float& f : u.features.values) {
      const std::uint32_t bits = need_u32(is, "features");
      std::memcpy(&f, &bits, sizeof f);
    }
    const std::uint32_t labels = need_u32(is, "label count");
    u.labels.resize(labels);
    for (UnitId& id : u.labels) id = need_u32(is, "labels");
    if (labels < 2 || u.labels.front() != Vocab::kSos ||
        u.labels.back() != Vocab::kEos) {
      throw DataError("dataset: labels of record " +
                      std::to_string(out.size()) +
                      " are not framed by <sos>/<eos>");
    }
    const std::uint32_t bytes = need_u32(is, "transcript length");
    u.transcript.resize(bytes);
    if (bytes && !is.read(u.transcript.data(), bytes)) {
      throw DataError("dataset: truncated record (transcript)");
    }
    out.push_back(std::move(u));
  }
  return out;
}

void save_dataset(const std::string& path,
                  const std::vector<Utterance>& utterances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("dataset: cannot write " + path);
  write_dataset(out, utterances);
}

std::vector<Utterance> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("dataset: cannot open " + path);
  return read_dataset(in);
}

void save_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace caaed
