#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hasr {

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

struct Alignment {
  EditCounts counts;
  std::vector<EditOp> ops;  // reference order
};

// Minimum-edit alignment of hyp against ref. Among equal-cost alignments the
// one pairing the most words (fewest deletions and insertions) is chosen, and
// the backtrace prefers substitution (or match), then deletion, then insertion.
Alignment align_words(std::span<const std::string> ref, std::span<const std::string> hyp);

struct WerReport {
  EditCounts counts;
  std::size_t ref_words = 0;
  std::size_t utterances = 0;

  double wer() const;  // percent; errors / ref_words * 100, throws if ref_words == 0
  void add(const EditCounts& c, std::size_t ref_len);
  // "WER 12.34% (S=.., D=.., I=.., N=..)"
  std::string summary() const;
};

// Upper-cased whitespace tokens.
std::vector<std::string> normalize_words(const std::string& text);

WerReport score_pair(const std::string& ref, const std::string& hyp);

// Scores every reference; references without a hypothesis count as empty
// output and are listed in `unhypothesized`. Hypotheses without a reference
// are rejected, as is a reference set with no words.
WerReport score_corpus(const std::map<std::string, std::string>& refs,
                       const std::map<std::string, std::string>& hyps,
                       std::vector<std::string>* unhypothesized = nullptr);

// Per-utterance rows plus a total row:
// "utt_id ref_words substitutions deletions insertions" tab-separated.
void write_score_report(std::ostream& out, const std::map<std::string, std::string>& refs,
                        const std::map<std::string, std::string>& hyps);

// "id<TAB>text" per line, or manifest rows whose last column is the transcript.
std::map<std::string, std::string> read_references(std::istream& in);
// Rank-1 rows of an n-best file.
std::map<std::string, std::string> read_best_hypotheses(std::istream& in);

}  // namespace hasr
