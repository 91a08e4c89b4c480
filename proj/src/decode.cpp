#include "hasr/decode.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "hasr/errors.h"
#include "hasr/model.h"

namespace hasr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct AttentionState final : SequenceScorer::State {
  DecoderState decoder;
};

const DecoderState& decoder_state(const SequenceScorer::StatePtr& ptr) {
  const auto* s = dynamic_cast<const AttentionState*>(ptr.get());
  if (!s) throw ContractError("scorer state does not belong to the attention decoder");
  return s->decoder;
}

std::size_t emitted(const Hypothesis& h, LabelId eos) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < h.tokens.size(); ++i) {
    if (h.tokens[i] != eos) ++n;
  }
  return n;
}

struct Candidate {
  std::size_t parent;
  LabelId label;
  double log_prob;
  double rank;
};

}  // namespace

AttentionScorer::AttentionScorer(const Decoder& decoder, const Tensor& h, std::size_t num_labels)
    : decoder_(decoder), num_labels_(num_labels) {
  Tape tape(Tape::Mode::kInference);
  keys_ = prepare_keys(tape, h, decoder_.params().attention);
}

SequenceScorer::StatePtr AttentionScorer::initial() const {
  auto s = std::make_shared<AttentionState>();
  s->decoder = decoder_.initial_state(keys_.h.rows());
  return s;
}

SequenceScorer::Scores AttentionScorer::score(const StatePtr& state) const {
  Tape tape(Tape::Mode::kInference);
  StepOutput out = decoder_.step(tape, decoder_state(state), keys_);
  const Tensor log_probs = log_softmax(tape, out.logits);
  Scores scores;
  scores.log_probs.assign(num_labels_, kNegInf);
  for (std::size_t i = 0; i < log_probs.numel(); ++i) {
    scores.log_probs[static_cast<std::size_t>(decoder_label(i))] = log_probs.at(i);
  }
  auto next = std::make_shared<AttentionState>();
  next->decoder = std::move(out.state);
  scores.context = std::move(next);
  return scores;
}

SequenceScorer::StatePtr AttentionScorer::extend(const Scores& scores, LabelId label) const {
  auto next = std::make_shared<AttentionState>();
  next->decoder = decoder_state(scores.context);
  next->decoder.prev_label = label;
  return next;
}

void BeamOptions::validate() const {
  if (beam == 0) throw ConfigError("beam width must be at least 1");
  if (!std::isfinite(length_penalty)) throw ConfigError("length penalty must be finite");
}

std::size_t BeamOptions::resolve_max_len(std::size_t encoder_frames) const {
  return max_len > 0 ? max_len : 2 * encoder_frames + 10;
}

std::vector<LabelId> Hypothesis::labels() const {
  std::vector<LabelId> out;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (finished && i + 1 == tokens.size()) break;
    out.push_back(tokens[i]);
  }
  return out;
}

std::vector<Hypothesis> beam_search(const SequenceScorer& scorer, const BeamOptions& options,
                                    std::size_t max_len) {
  options.validate();
  const LabelId sos = scorer.sos();
  const LabelId eos = scorer.eos();

  std::vector<Hypothesis> live(1);
  live[0].tokens = {sos};
  live[0].state = scorer.initial();
  std::vector<Hypothesis> completed;

  // Sequences in one step share a length, so comparing parent tokens then the
  // new label is a full lexicographic comparison.
  auto better = [&](const Candidate& a, const Candidate& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    if (a.parent != b.parent) {
      return live[a.parent].tokens < live[b.parent].tokens;
    }
    return a.label < b.label;
  };

  while (!live.empty()) {
    std::vector<SequenceScorer::Scores> scores;
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < live.size(); ++p) {
      scores.push_back(scorer.score(live[p].state));
      const auto& lp = scores.back().log_probs;
      const bool forced = emitted(live[p], eos) >= max_len;
      const double length = static_cast<double>(live[p].tokens.size());
      for (std::size_t k = 0; k < lp.size(); ++k) {
        const auto label = static_cast<LabelId>(k);
        if (label == sos) continue;
        if (forced ? label != eos : lp[k] == kNegInf) continue;
        if (std::isnan(lp[k])) throw NumericError("decoder produced a NaN log-probability");
        const double total = live[p].log_prob + lp[k];
        candidates.push_back({p, label, total, total + options.length_penalty * length});
      }
    }
    const std::size_t keep = std::min(options.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);

    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.label);
      h.log_prob = c.log_prob;
      if (c.label == eos) {
        h.finished = true;
        completed.push_back(std::move(h));
      } else {
        h.state = scorer.extend(scores[c.parent], c.label);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  auto rank = [&](const Hypothesis& h) {
    return h.log_prob + options.length_penalty * static_cast<double>(h.tokens.size() - 1);
  };
  std::stable_sort(completed.begin(), completed.end(),
                   [&](const Hypothesis& a, const Hypothesis& b) {
                     const double ra = rank(a);
                     const double rb = rank(b);
                     if (ra != rb) return ra > rb;
                     return a.tokens < b.tokens;
                   });
  return completed;
}

Hypothesis greedy_search(const SequenceScorer& scorer, std::size_t max_len) {
  const LabelId sos = scorer.sos();
  const LabelId eos = scorer.eos();
  Hypothesis h;
  h.tokens = {sos};
  h.state = scorer.initial();
  while (true) {
    const SequenceScorer::Scores s = scorer.score(h.state);
    LabelId best = eos;
    if (emitted(h, eos) < max_len) {
      double best_lp = kNegInf;
      for (std::size_t k = 0; k < s.log_probs.size(); ++k) {
        const auto label = static_cast<LabelId>(k);
        if (label == sos) continue;
        if (std::isnan(s.log_probs[k])) throw NumericError("decoder produced a NaN log-probability");
        if (s.log_probs[k] > best_lp) {
          best_lp = s.log_probs[k];
          best = label;
        }
      }
    }
    h.log_prob += s.log_probs[static_cast<std::size_t>(best)];
    h.tokens.push_back(best);
    if (best == eos) {
      h.finished = true;
      h.state = nullptr;
      return h;
    }
    h.state = scorer.extend(s, best);
  }
}

namespace {

Tensor encode_for_search(const Model& model, const Tensor& features) {
  Tape tape(Tape::Mode::kInference);
  return model.encoder().encode(tape, features, Mode::kInference).h;
}

}  // namespace

std::vector<Hypothesis> beam_search(const Model& model, const Tensor& features,
                                    const BeamOptions& options) {
  const Tensor h = encode_for_search(model, features);
  const AttentionScorer scorer(model.decoder(), h, model.labels().num_labels());
  return beam_search(scorer, options, options.resolve_max_len(h.rows()));
}

Hypothesis greedy_decode(const Model& model, const Tensor& features, std::size_t max_len) {
  const Tensor h = encode_for_search(model, features);
  const AttentionScorer scorer(model.decoder(), h, model.labels().num_labels());
  return greedy_search(scorer, max_len > 0 ? max_len : 2 * h.rows() + 10);
}

std::string hypothesis_text(const Hypothesis& hyp, const UnitTable& labels) {
  std::vector<std::string> units;
  for (LabelId id : hyp.labels()) {
    if (!labels.is_unit(id)) {
      throw ContractError("hypothesis contains non-unit label " + std::to_string(id));
    }
    units.push_back(labels.unit(id));
  }
  return detokenize(units).text();
}

void write_nbest(std::ostream& out, const std::string& utt_id,
                 const std::vector<Hypothesis>& hyps, const UnitTable& labels) {
  const auto old_precision = out.precision();
  out << std::setprecision(10);
  for (std::size_t r = 0; r < hyps.size(); ++r) {
    out << utt_id << '\t' << (r + 1) << '\t' << hyps[r].log_prob << '\t'
        << hypothesis_text(hyps[r], labels) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace hasr
