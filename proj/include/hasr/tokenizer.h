#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace hasr {

inline constexpr char kWordBoundary = '_';
inline constexpr std::string_view kDefaultAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ'";

struct MergeRule {
  std::string left;
  std::string right;
  std::size_t rank = 0;

  bool operator==(const MergeRule&) const = default;
};

// Subword inventory: every alphabet character, the word-end marker, then the
// units created by merges in rank order.
class SubwordVocab {
 public:
  SubwordVocab() = default;
  SubwordVocab(std::string alphabet, std::vector<MergeRule> merges);

  // Inventory given directly as units (e.g. read from a unit list). The
  // alphabet is taken from the single-character units.
  static SubwordVocab from_units(const std::vector<std::string>& units);

  const std::string& alphabet() const { return alphabet_; }
  const std::vector<std::string>& units() const { return units_; }
  const std::vector<MergeRule>& merges() const { return merges_; }
  bool contains(std::string_view unit) const;
  bool in_alphabet(char c) const;
  std::size_t longest_unit() const { return longest_; }

 private:
  void add_unit(const std::string& unit);

  std::string alphabet_;
  std::vector<std::string> units_;
  std::vector<MergeRule> merges_;
  std::unordered_set<std::string> lookup_;
  std::size_t longest_ = 1;
};

using WordCounts = std::map<std::string, long long>;

// Byte-pair encoding over word-final-marked character sequences. Pair
// frequencies are weighted by word counts; ties go to the lexicographically
// smallest (left, right). Stops early once no pair occurs at least twice.
SubwordVocab learn_bpe(const WordCounts& corpus, std::size_t num_merges,
                       std::string_view alphabet = kDefaultAlphabet);

// Word counts from whitespace-separated transcripts, one sentence per line.
WordCounts count_words(std::istream& transcripts);

enum class OovPolicy { kReject, kSkip };

// Greedy longest-match, left to right, over word + "_".
std::vector<std::string> segment(std::string_view word, const SubwordVocab& vocab,
                                 OovPolicy policy = OovPolicy::kReject);
std::vector<std::string> segment_sentence(std::string_view text, const SubwordVocab& vocab,
                                          OovPolicy policy = OovPolicy::kReject);

struct Detokenized {
  std::vector<std::string> words;
  // The last word had no closing "_".
  bool partial_tail = false;

  std::string text() const;
};

Detokenized detokenize(std::span<const std::string> units);

std::vector<std::string> split_words(std::string_view text);

// Merge file: "#version 1" then one "left right" per line in rank order.
void write_merges(std::ostream& out, const SubwordVocab& vocab);
std::vector<MergeRule> read_merges(std::istream& in);

}  // namespace hasr
