#include "hasr/eval.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <utility>

#include "hasr/errors.h"

namespace hasr {

Alignment align_words(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  // Each cell holds (errors, -paired words) so that among minimum-error
  // alignments the one pairing the most words wins; this count is the same
  // whichever side is called the reference.
  using Cost = std::pair<std::size_t, std::ptrdiff_t>;
  std::vector<Cost> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cost& { return cost[i * (m + 1) + j]; };
  auto plus = [](Cost c, std::size_t errors, std::ptrdiff_t paired) {
    return Cost{c.first + errors, c.second - paired};
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, 0};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const Cost diag = plus(at(i - 1, j - 1), ref[i - 1] == hyp[j - 1] ? 0 : 1, 1);
      at(i, j) = std::min({diag, plus(at(i - 1, j), 1, 0), plus(at(i, j - 1), 1, 0)});
    }
  }

  Alignment out;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == plus(at(i - 1, j - 1), same ? 0 : 1, 1)) {
        out.ops.push_back(same ? EditOp::kMatch : EditOp::kSubstitution);
        if (!same) ++out.counts.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == plus(at(i - 1, j), 1, 0)) {
      out.ops.push_back(EditOp::kDeletion);
      ++out.counts.deletions;
      --i;
      continue;
    }
    out.ops.push_back(EditOp::kInsertion);
    ++out.counts.insertions;
    --j;
  }
  std::reverse(out.ops.begin(), out.ops.end());
  return out;
}

double WerReport::wer() const {
  if (ref_words == 0) throw ContractError("word error rate over zero reference words");
  return 100.0 * static_cast<double>(counts.errors()) / static_cast<double>(ref_words);
}

void WerReport::add(const EditCounts& c, std::size_t ref_len) {
  counts.substitutions += c.substitutions;
  counts.deletions += c.deletions;
  counts.insertions += c.insertions;
  ref_words += ref_len;
  ++utterances;
}

std::string WerReport::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "WER %.2f%% (S=%zu, D=%zu, I=%zu, N=%zu)", wer(),
                counts.substitutions, counts.deletions, counts.insertions, ref_words);
  return buf;
}

std::vector<std::string> normalize_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) {
    for (char& ch : w) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    words.push_back(std::move(w));
  }
  return words;
}

WerReport score_pair(const std::string& ref, const std::string& hyp) {
  const auto r = normalize_words(ref);
  const auto h = normalize_words(hyp);
  WerReport report;
  report.add(align_words(r, h).counts, r.size());
  return report;
}

WerReport score_corpus(const std::map<std::string, std::string>& refs,
                       const std::map<std::string, std::string>& hyps,
                       std::vector<std::string>* unhypothesized) {
  std::string unknown;
  for (const auto& [id, text] : hyps) {
    if (!refs.count(id)) unknown += (unknown.empty() ? "" : ", ") + id;
  }
  if (!unknown.empty()) throw ContractError("hypotheses for unknown utterances: " + unknown);
  WerReport report;
  for (const auto& [id, text] : refs) {
    const auto it = hyps.find(id);
    if (it == hyps.end() && unhypothesized) unhypothesized->push_back(id);
    const auto r = normalize_words(text);
    const auto h = normalize_words(it == hyps.end() ? std::string() : it->second);
    report.add(align_words(r, h).counts, r.size());
  }
  if (report.ref_words == 0) throw ContractError("references contain no words");
  return report;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::map<std::string, std::string> read_references(std::istream& in) {
  std::map<std::string, std::string> refs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2 && fields.size() != 4) {
      throw ParseError("reference line " + std::to_string(lineno) +
                       ": expected id<TAB>text or a four-column manifest row");
    }
    if (!refs.emplace(fields[0], fields.back()).second) {
      throw ParseError("reference line " + std::to_string(lineno) + ": duplicate id " + fields[0]);
    }
  }
  return refs;
}

std::map<std::string, std::string> read_best_hypotheses(std::istream& in) {
  std::map<std::string, std::string> hyps;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw ParseError("hypothesis line " + std::to_string(lineno) +
                       ": expected id<TAB>rank<TAB>score<TAB>text");
    }
    if (fields[1] != "1") continue;
    if (!hyps.emplace(fields[0], fields[3]).second) {
      throw ParseError("hypothesis line " + std::to_string(lineno) + ": second rank-1 row for " +
                       fields[0]);
    }
  }
  return hyps;
}

void write_score_report(std::ostream& out, const std::map<std::string, std::string>& refs,
                        const std::map<std::string, std::string>& hyps) {
  out << "utt_id\tref_words\tsubstitutions\tdeletions\tinsertions\n";
  EditCounts total;
  std::size_t words = 0;
  for (const auto& [id, text] : refs) {
    const auto it = hyps.find(id);
    const auto r = normalize_words(text);
    const auto c = align_words(r, normalize_words(it == hyps.end() ? std::string() : it->second)).counts;
    out << id << '\t' << r.size() << '\t' << c.substitutions << '\t' << c.deletions << '\t'
        << c.insertions << '\n';
    total.substitutions += c.substitutions;
    total.deletions += c.deletions;
    total.insertions += c.insertions;
    words += r.size();
  }
  out << "TOTAL\t" << words << '\t' << total.substitutions << '\t' << total.deletions << '\t'
      << total.insertions << '\n';
}

}  // namespace hasr
