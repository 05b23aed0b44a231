#pragma once

// Output-unit inventories: word pieces learned by pair merging, mixed units
// (frequent whole words plus leftover spans), and plain characters.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace caaed {

using UnitId = std::uint32_t;
using CharId = std::uint32_t;

// Fixed character inventory shared by every vocabulary: the four specials
// followed by a-z and the apostrophe.
struct CharInventory {
  static constexpr CharId kSos = 0;
  static constexpr CharId kEos = 1;
  static constexpr CharId kSpace = 2;
  static constexpr CharId kUnk = 3;

  static const std::vector<std::string>& symbols();
  static std::size_t size() { return symbols().size(); }
  // Id of a plain character, or kUnk when it is outside the inventory.
  static CharId id_of(char c);
  static bool contains(char c);
};

// Transcript corpus: lowercased words separated by single spaces.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<std::string> lines);
  static Corpus from_file(const std::string& path);

  const std::vector<std::string>& lines() const { return lines_; }
  // Ordered by word so iteration is deterministic.
  const std::map<std::string, std::size_t>& word_counts() const {
    return counts_;
  }
  bool empty() const { return counts_.empty(); }

 private:
  std::vector<std::string> lines_;
  std::map<std::string, std::size_t> counts_;
};

std::vector<std::string> split_words(std::string_view line);

enum class VocabKind { WordPiece, MixedUnit, Character };

std::string to_string(VocabKind kind);
VocabKind parse_vocab_kind(std::string_view text);

class Vocab {
 public:
  static constexpr UnitId kSos = 0;
  static constexpr UnitId kEos = 1;
  static constexpr UnitId kSpace = 2;
  static constexpr UnitId kUnk = 3;

  VocabKind kind() const { return kind_; }
  std::size_t size() const { return units_.size(); }
  const std::string& unit(UnitId id) const;
  const std::vector<std::string>& units() const { return units_; }
  // Returns kUnk when the string is not a unit.
  UnitId id_of(std::string_view unit) const;
  bool contains(std::string_view unit) const;
  bool is_special(UnitId id) const { return id <= kUnk; }

  const std::vector<CharId>& char_ids(UnitId id) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const {
    return merges_;
  }
  const std::map<std::string, std::vector<std::string>>& decompositions()
      const {
    return decompositions_;
  }

  // Segmentation of one word into unit strings (no boundary tokens).
  std::vector<std::string> segment_word(std::string_view word) const;

  std::vector<UnitId> tokenize(std::string_view line) const;
  std::string detokenize(const std::vector<UnitId>& ids) const;

  void write(std::ostream& os) const;
  static Vocab read(std::istream& is);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  friend bool operator==(const Vocab&, const Vocab&) = default;

  // Builders.
  friend Vocab build_character_vocab(const Corpus& corpus);
  friend Vocab build_wordpiece(const Corpus& corpus, std::size_t target_size);
  friend Vocab build_mixed_units(const Corpus& corpus,
                                 std::size_t freq_threshold);

 private:
  explicit Vocab(VocabKind kind);
  UnitId add_unit(const std::string& unit);
  std::vector<std::string> segment_with_merges(std::string_view word) const;
  std::vector<std::string> segment_mixed(std::string_view word) const;

  VocabKind kind_ = VocabKind::Character;
  std::vector<std::string> units_;
  std::unordered_map<std::string, UnitId> unit_to_id_;
  std::vector<std::vector<CharId>> unit_chars_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::string, std::vector<std::string>> decompositions_;
  std::size_t max_word_unit_length_ = 0;
};

// Specials plus every inventory character that occurs in the corpus.
Vocab build_character_vocab(const Corpus& corpus);

// Starts from the corpus characters and merges the most frequent adjacent
// pair inside words until `target_size` units exist or no pair occurs twice.
// Ties go to the lexicographically smallest merged string.
Vocab build_wordpiece(const Corpus& corpus, std::size_t target_size);

// Words seen at least `freq_threshold` times become whole-word units; other
// words decompose by greedy longest-prefix match against them, and the
// leftover spans become units.
Vocab build_mixed_units(const Corpus& corpus, std::size_t freq_threshold);

// Greedy longest-prefix decomposition of `word` against `frequent` words.
// Characters not covered by a match are grouped into maximal leftover spans.
std::vector<std::string> greedy_decompose(
    std::string_view word, const std::vector<std::string>& frequent_by_length);

}  // namespace caaed
