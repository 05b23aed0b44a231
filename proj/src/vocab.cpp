#include "caaed/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "caaed/error.hpp"

namespace caaed {

namespace {

const char* const kSpecialNames[] = {"<sos>", "<eos>", "<space>", "<unk>"};
const char kPlainChars[] = "abcdefghijklmnopqrstuvwxyz'";

}  // namespace

const std::vector<std::string>& CharInventory::symbols() {
  static const std::vector<std::string> table = [] {
    std::vector<std::string> s(std::begin(kSpecialNames),
                               std::end(kSpecialNames));
    for (const char* c = kPlainChars; *c; ++c) s.emplace_back(1, *c);
    return s;
  }();
  return table;
}

bool CharInventory::contains(char c) {
  return (c >= 'a' && c <= 'z') || c == '\'';
}

CharId CharInventory::id_of(char c) {
  if (c >= 'a' && c <= 'z') return 4 + static_cast<CharId>(c - 'a');
  if (c == '\'') return 30;
  return kUnk;
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                               line[i] == '\r' || line[i] == '\n')) {
      ++i;
    }
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' &&
           line[j] != '\r' && line[j] != '\n') {
      ++j;
    }
    if (j > i) words.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return words;
}

// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<std::string> lines) : lines_(std::move(lines)) {
  for (const std::string& line : lines_) {
    for (std::string& w : split_words(line)) {
      for (char c : w) {
        if (!CharInventory::contains(c)) {
          throw DataError("corpus: word '" + w +
                          "' contains a character outside the inventory");
        }
      }
      ++counts_[std::move(w)];
    }
  }
}

Corpus Corpus::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("corpus: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return Corpus(std::move(lines));
}

std::string to_string(VocabKind kind) {
  switch (kind) {
    case VocabKind::WordPiece: return "word-piece";
    case VocabKind::MixedUnit: return "mixed-unit";
    case VocabKind::Character: return "character";
  }
  return "unknown";
}

VocabKind parse_vocab_kind(std::string_view text) {
  if (text == "word-piece") return VocabKind::WordPiece;
  if (text == "mixed-unit") return VocabKind::MixedUnit;
  if (text == "character") return VocabKind::Character;
  throw ConfigError("unknown vocabulary kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

Vocab::Vocab(VocabKind kind) : kind_(kind) {
  for (const char* s : kSpecialNames) add_unit(s);
}

UnitId Vocab::add_unit(const std::string& unit) {
  auto [it, inserted] =
      unit_to_id_.emplace(unit, static_cast<UnitId>(units_.size()));
  if (!inserted) return it->second;
  units_.push_back(unit);
  std::vector<CharId> chars;
  if (units_.size() <= 4) {
    chars.push_back(static_cast<CharId>(units_.size() - 1));
  } else {
    for (char c : unit) chars.push_back(CharInventory::id_of(c));
    max_word_unit_length_ = std::max(max_word_unit_length_, unit.size());
  }
  unit_chars_.push_back(std::move(chars));
  return it->second;
}

const std::string& Vocab::unit(UnitId id) const {
  if (id >= units_.size()) {
    throw DataError("vocab: unit id " + std::to_string(id) +
                    " out of range (size " + std::to_string(units_.size()) +
                    ")");
  }
  return units_[id];
}

UnitId Vocab::id_of(std::string_view unit) const {
  auto it = unit_to_id_.find(std::string(unit));
  return it == unit_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view unit) const {
  return unit_to_id_.count(std::string(unit)) != 0;
}

const std::vector<CharId>& Vocab::char_ids(UnitId id) const {
  if (id >= unit_chars_.size()) {
    throw DataError("vocab: unit id " + std::to_string(id) +
                    " out of range (size " + std::to_string(units_.size()) +
                    ")");
  }
  return unit_chars_[id];
}

namespace {

void apply_merge(std::vector<std::string>& pieces, const std::string& left,
                 const std::string& right) {
  if (pieces.size() < 2) return;
  std::vector<std::string> out;
  out.reserve(pieces.size());
  std::size_t i = 0;
  while (i < pieces.size()) {
    if (i + 1 < pieces.size() && pieces[i] == left && pieces[i + 1] == right) {
      out.push_back(left + right);
      i += 2;
    } else {
      out.push_back(std::move(pieces[i]));
      ++i;
    }
  }
  pieces = std::move(out);
}

std::vector<std::string> chars_of(std::string_view word) {
  std::vector<std::string> pieces;
  pieces.reserve(word.size());
  for (char c : word) pieces.emplace_back(1, c);
  return pieces;
}

}  // namespace

std::vector<std::string> Vocab::segment_with_merges(
    std::string_view word) const {
  std::vector<std::string> pieces = chars_of(word);
  for (const auto& [left, right] : merges_) apply_merge(pieces, left, right);
  return pieces;
}

std::vector<std::string> greedy_decompose(
    std::string_view word, const std::vector<std::string>& frequent_by_length) {
  std::vector<std::string> pieces;
  std::string leftover;
  std::size_t pos = 0;
  while (pos < word.size()) {
    const std::string* match = nullptr;
    for (const std::string& w : frequent_by_length) {
      if (w.size() <= word.size() - pos && word.compare(pos, w.size(), w) == 0) {
        match = &w;
        break;
      }
    }
    if (match != nullptr) {
      if (!leftover.empty()) pieces.push_back(std::exchange(leftover, {}));
      pieces.push_back(*match);
      pos += match->size();
    } else {
      leftover.push_back(word[pos]);
      ++pos;
    }
  }
  if (!leftover.empty()) pieces.push_back(std::move(leftover));
  return pieces;
}

namespace {

// Longest first, then lexicographic, so the first prefix hit is the longest.
std::vector<std::string> sort_by_length(std::vector<std::string> words) {
  std::sort(words.begin(), words.end(),
            [](const std::string& a, const std::string& b) {
              return a.size() != b.size() ? a.size() > b.size() : a < b;
            });
  return words;
}

}  // namespace

std::vector<std::string> Vocab::segment_mixed(std::string_view word) const {
  std::string key(word);
  if (contains(key)) return {key};
  if (auto it = decompositions_.find(key); it != decompositions_.end()) {
    return it->second;
  }
  // Unseen word: any multi-character unit is a prefix candidate.
  std::vector<std::string> frequent;
  for (std::size_t id = 4; id < units_.size(); ++id) {
    if (units_[id].size() > 1) frequent.push_back(units_[id]);
  }
  std::vector<std::string> out;
  for (std::string& piece : greedy_decompose(word, sort_by_length(frequent))) {
    if (contains(piece)) {
      out.push_back(std::move(piece));
    } else {
      for (char c : piece) out.emplace_back(1, c);
    }
  }
  return out;
}

std::vector<std::string> Vocab::segment_word(std::string_view word) const {
  switch (kind_) {
    case VocabKind::WordPiece:
    case VocabKind::Character:
      return segment_with_merges(word);
    case VocabKind::MixedUnit:
      return segment_mixed(word);
  }
  return chars_of(word);
}

std::vector<UnitId> Vocab::tokenize(std::string_view line) const {
  std::vector<UnitId> ids{kSos};
  bool first = true;
  for (const std::string& word : split_words(line)) {
    if (!first) ids.push_back(kSpace);
    first = false;
    for (const std::string& piece : segment_word(word)) {
      ids.push_back(id_of(piece));
    }
  }
  ids.push_back(kEos);
  return ids;
}

std::string Vocab::detokenize(const std::vector<UnitId>& ids) const {
  std::string text;
  for (UnitId id : ids) {
    const std::string& u = unit(id);
    if (id == kSos || id == kEos) continue;
    if (id == kSpace) {
      text.push_back(' ');
    } else {
      text += u;
    }
  }
  return text;
}

// ---------------------------------------------------------------------------
// Serialization

void Vocab::write(std::ostream& os) const {
  os << to_string(kind_) << '\t' << units_.size() << '\n';
  for (std::size_t id = 0; id < units_.size(); ++id) {
    os << id << '\t' << units_[id] << '\t';
    for (std::size_t k = 0; k < unit_chars_[id].size(); ++k) {
      if (k) os << ' ';
      os << unit_chars_[id][k];
    }
    os << '\n';
  }
  if (kind_ == VocabKind::MixedUnit) {
    os << "#decomp\n";
    for (const auto& [word, pieces] : decompositions_) {
      os << word << '\t';
      for (std::size_t k = 0; k < pieces.size(); ++k) {
        if (k) os << ' ';
        os << pieces[k];
      }
      os << '\n';
    }
  } else {
    os << "#merges\n";
    for (const auto& [left, right] : merges_) {
      os << left << '\t' << right << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::size_t parse_count(const std::string& text, const char* what) {
  if (text.empty() ||
      !std::all_of(text.begin(), text.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    throw DataError(std::string("vocab file: bad ") + what + " '" + text + "'");
  }
  return std::stoull(text);
}

}  // namespace

Vocab Vocab::read(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("vocab file: missing header");
  auto header = split_tabs(line);
  if (header.size() != 2) throw DataError("vocab file: malformed header");
  Vocab v(parse_vocab_kind(header[0]));
  const std::size_t size = parse_count(header[1], "size");
  if (size < 4) throw DataError("vocab file: size below special count");
  for (std::size_t id = 0; id < size; ++id) {
    if (!std::getline(is, line)) throw DataError("vocab file: truncated");
    auto fields = split_tabs(line);
    if (fields.size() != 3 || parse_count(fields[0], "id") != id) {
      throw DataError("vocab file: malformed unit line " +
                      std::to_string(id + 2));
    }
    if (id < 4) {
      if (fields[1] != kSpecialNames[id]) {
        throw DataError("vocab file: expected special " +
                        std::string(kSpecialNames[id]));
      }
    } else if (v.add_unit(fields[1]) != id) {
      throw DataError("vocab file: duplicate unit '" + fields[1] + "'");
    }
    std::ostringstream expect;
    for (std::size_t k = 0; k < v.unit_chars_[id].size(); ++k) {
      if (k) expect << ' ';
      expect << v.unit_chars_[id][k];
    }
    if (expect.str() != fields[2]) {
      throw DataError("vocab file: character ids of '" + fields[1] +
                      "' do not match its spelling");
    }
  }
  if (!std::getline(is, line)) throw DataError("vocab file: missing section");
  const bool mixed = v.kind_ == VocabKind::MixedUnit;
  if (line != (mixed ? "#decomp" : "#merges")) {
    throw DataError("vocab file: unexpected section '" + line + "'");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw DataError("vocab file: malformed rule line");
    if (mixed) {
      auto pieces = split_words(fields[1]);
      for (const auto& p : pieces) {
        if (!v.contains(p)) {
          throw DataError("vocab file: decomposition uses unknown unit '" + p +
                          "'");
        }
      }
      v.decompositions_[fields[0]] = std::move(pieces);
    } else {
      v.merges_.emplace_back(fields[0], fields[1]);
    }
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("vocab: cannot write " + path);
  write(out);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocab: cannot open " + path);
  return read(in);
}

// ---------------------------------------------------------------------------
// Builders

namespace {

std::set<char> corpus_chars(const Corpus& corpus) {
  std::set<char> chars;
  for (const auto& [word, count] : corpus.word_counts()) {
    chars.insert(word.begin(), word.end());
  }
  return chars;
}

void add_corpus_chars(Vocab& v, const Corpus& corpus,
                      UnitId (Vocab::*add)(const std::string&)) {
  // Inventory order, not byte order: a-z then the apostrophe.
  const auto present = corpus_chars(corpus);
  for (const char* c = kPlainChars; *c; ++c) {
    if (present.count(*c)) (v.*add)(std::string(1, *c));
  }
}

}  // namespace

Vocab build_character_vocab(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("build_character_vocab: empty corpus");
  Vocab v(VocabKind::Character);
  add_corpus_chars(v, corpus, &Vocab::add_unit);
  return v;
}

Vocab build_wordpiece(const Corpus& corpus, std::size_t target_size) {
  if (corpus.empty()) throw DataError("build_wordpiece: empty corpus");
  Vocab v(VocabKind::WordPiece);
  add_corpus_chars(v, corpus, &Vocab::add_unit);
  if (target_size < v.size()) {
    throw ConfigError("build_wordpiece: target size " +
                      std::to_string(target_size) +
                      " is below the base inventory of " +
                      std::to_string(v.size()));
  }

  struct WordState {
    std::vector<std::string> pieces;
    std::size_t count;
  };
  std::vector<WordState> words;
  for (const auto& [word, count] : corpus.word_counts()) {
    words.push_back({chars_of(word), count});
  }

  while (v.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const WordState& w : words) {
      for (std::size_t i = 0; i + 1 < w.pieces.size(); ++i) {
        pair_counts[{w.pieces[i], w.pieces[i + 1]}] += w.count;
      }
    }
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    std::string best_merged;
    for (const auto& [pair, count] : pair_counts) {
      std::string merged = pair.first + pair.second;
      if (count > best_count || (count == best_count && merged < best_merged)) {
        best = &pair;
        best_count = count;
        best_merged = std::move(merged);
      }
    }
    if (best == nullptr || best_count < 2) break;
    const auto [left, right] = *best;
    for (WordState& w : words) apply_merge(w.pieces, left, right);
    v.merges_.emplace_back(left, right);
    v.add_unit(left + right);
  }
  return v;
}

Vocab build_mixed_units(const Corpus& corpus, std::size_t freq_threshold) {
  if (corpus.empty()) throw DataError("build_mixed_units: empty corpus");
  if (freq_threshold < 1) {
    throw ConfigError("build_mixed_units: frequency threshold must be >= 1");
  }
  Vocab v(VocabKind::MixedUnit);
  add_corpus_chars(v, corpus, &Vocab::add_unit);

  std::vector<std::string> frequent;
  for (const auto& [word, count] : corpus.word_counts()) {
    if (count >= freq_threshold) frequent.push_back(word);
  }
  for (const std::string& w : frequent) v.add_unit(w);
  const auto by_length = sort_by_length(frequent);

  std::set<std::string> leftovers;
  for (const auto& [word, count] : corpus.word_counts()) {
    if (count >= freq_threshold) continue;
    auto pieces = greedy_decompose(word, by_length);
    for (const std::string& p : pieces) {
      if (p.size() > 1 && !v.contains(p)) leftovers.insert(p);
    }
    v.decompositions_[word] = std::move(pieces);
  }
  for (const std::string& l : leftovers) v.add_unit(l);
  return v;
}

}  // namespace caaed
