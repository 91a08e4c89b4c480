#include "hasr/tokenizer.h"

#include <algorithm>
#include <iostream>
#include <sstream>
#include <utility>

#include "hasr/errors.h"

namespace hasr {

namespace {

std::string describe_char(char c) {
  if (c >= 0x20 && c < 0x7f) return std::string("'") + c + "'";
  std::ostringstream os;
  os << "byte 0x" << std::hex << static_cast<int>(static_cast<unsigned char>(c));
  return os.str();
}

void check_alphabet(std::string_view alphabet) {
  if (alphabet.empty()) throw ConfigError("alphabet must not be empty");
  for (std::size_t i = 0; i < alphabet.size(); ++i) {
    const char c = alphabet[i];
    if (c == kWordBoundary) throw ConfigError("alphabet must not contain the boundary symbol '_'");
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      throw ConfigError("alphabet must not contain whitespace");
    }
    if (alphabet.find(c) != i) throw ConfigError("alphabet repeats " + describe_char(c));
  }
}

}  // namespace

SubwordVocab::SubwordVocab(std::string alphabet, std::vector<MergeRule> merges)
    : alphabet_(std::move(alphabet)) {
  check_alphabet(alphabet_);
  for (char c : alphabet_) add_unit(std::string(1, c));
  add_unit(std::string(1, kWordBoundary));
  for (std::size_t i = 0; i < merges.size(); ++i) {
    const MergeRule& m = merges[i];
    if (m.rank != i) throw ContractError("merge ranks must be contiguous from 0");
    if (!contains(m.left) || !contains(m.right)) {
      throw ContractError("merge " + m.left + " " + m.right + " uses an unknown unit");
    }
    add_unit(m.left + m.right);
  }
  merges_ = std::move(merges);
}

SubwordVocab SubwordVocab::from_units(const std::vector<std::string>& units) {
  SubwordVocab vocab;
  for (const std::string& u : units) {
    if (u.size() == 1 && u[0] != kWordBoundary) vocab.alphabet_.push_back(u[0]);
  }
  check_alphabet(vocab.alphabet_);
  for (char c : vocab.alphabet_) vocab.add_unit(std::string(1, c));
  vocab.add_unit(std::string(1, kWordBoundary));
  for (const std::string& u : units) {
    if (u.empty()) throw ContractError("empty unit");
    for (char c : u) {
      if (c != kWordBoundary && !vocab.in_alphabet(c)) {
        throw ContractError("unit " + u + " uses " + describe_char(c) +
                            " which is not a single-character unit");
      }
    }
    vocab.add_unit(u);
  }
  return vocab;
}

void SubwordVocab::add_unit(const std::string& unit) {
  if (lookup_.insert(unit).second) {
    units_.push_back(unit);
    longest_ = std::max(longest_, unit.size());
  }
}

bool SubwordVocab::contains(std::string_view unit) const {
  return lookup_.contains(std::string(unit));
}

bool SubwordVocab::in_alphabet(char c) const {
  return alphabet_.find(c) != std::string::npos;
}

SubwordVocab learn_bpe(const WordCounts& corpus, std::size_t num_merges,
                       std::string_view alphabet) {
  check_alphabet(alphabet);
  struct Word {
    std::vector<std::string> symbols;
    long long count;
  };
  std::vector<Word> words;
  for (const auto& [word, count] : corpus) {
    if (word.empty() || count <= 0) continue;
    Word w{{}, count};
    for (char c : word) {
      if (alphabet.find(c) == std::string_view::npos) {
        throw ContractError("word \"" + word + "\" contains " + describe_char(c) +
                            " outside the alphabet");
      }
      w.symbols.emplace_back(1, c);
    }
    w.symbols.emplace_back(1, kWordBoundary);
    words.push_back(std::move(w));
  }

  std::vector<MergeRule> merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, long long> pairs;
    for (const Word& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
      }
    }
    // Map order is lexicographic on (left, right), so the first maximum wins ties.
    const std::pair<std::string, std::string>* best = nullptr;
    long long best_count = 0;
    for (const auto& [pair, count] : pairs) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best || best_count < 2) break;
    const std::string left = best->first, right = best->second;
    const std::string joined = left + right;
    for (Word& w : words) {
      std::vector<std::string> merged;
      merged.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          merged.push_back(joined);
          ++i;
        } else {
          merged.push_back(std::move(w.symbols[i]));
        }
      }
      w.symbols = std::move(merged);
    }
    merges.push_back(MergeRule{left, right, merges.size()});
  }
  return SubwordVocab(std::string(alphabet), std::move(merges));
}

WordCounts count_words(std::istream& transcripts) {
  WordCounts counts;
  std::string line;
  while (std::getline(transcripts, line)) {
    for (const std::string& w : split_words(line)) ++counts[w];
  }
  return counts;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::vector<std::string> segment(std::string_view word, const SubwordVocab& vocab,
                                 OovPolicy policy) {
  std::string s;
  s.reserve(word.size() + 1);
  for (char c : word) {
    if (vocab.in_alphabet(c)) {
      s.push_back(c);
    } else if (policy == OovPolicy::kReject) {
      throw ContractError("word \"" + std::string(word) + "\" contains " + describe_char(c) +
                          " outside the alphabet");
    } else {
      std::clog << "warning: skipping " << describe_char(c) << " in \"" << word << "\"\n";
    }
  }
  if (s.empty()) return {};
  s.push_back(kWordBoundary);

  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t len = std::min(vocab.longest_unit(), s.size() - pos);
    while (len > 1 && !vocab.contains(std::string_view(s).substr(pos, len))) --len;
    out.push_back(s.substr(pos, len));
    pos += len;
  }
  return out;
}

std::vector<std::string> segment_sentence(std::string_view text, const SubwordVocab& vocab,
                                          OovPolicy policy) {
  std::vector<std::string> out;
  const std::vector<std::string> words = split_words(text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    try {
      for (std::string& u : segment(words[i], vocab, policy)) out.push_back(std::move(u));
    } catch (const ContractError& e) {
      throw ContractError("word " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::string Detokenized::text() const {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s.push_back(' ');
    s += words[i];
  }
  return s;
}

Detokenized detokenize(std::span<const std::string> units) {
  Detokenized result;
  std::string current;
  for (const std::string& u : units) {
    for (char c : u) {
      if (c == kWordBoundary) {
        if (!current.empty()) result.words.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(c);
      }
    }
  }
  if (!current.empty()) {
    result.words.push_back(std::move(current));
    result.partial_tail = true;
  }
  return result;
}

void write_merges(std::ostream& out, const SubwordVocab& vocab) {
  out << "#version 1\n";
  for (const MergeRule& m : vocab.merges()) out << m.left << ' ' << m.right << '\n';
}

std::vector<MergeRule> read_merges(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "#version 1") {
    throw ParseError("merge file line 1: expected \"#version 1\"");
  }
  std::vector<MergeRule> merges;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> parts = split_words(line);
    if (parts.size() != 2) {
      throw ParseError("merge file line " + std::to_string(line_no) + ": expected \"left right\"");
    }
    merges.push_back(MergeRule{parts[0], parts[1], merges.size()});
  }
  return merges;
}

}  // namespace hasr
