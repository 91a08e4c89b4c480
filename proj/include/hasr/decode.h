#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "hasr/attention.h"
#include "hasr/units.h"

namespace hasr {

class Model;

// Left-to-right label scorer driven by the search. Label ids index the
// log-probability vector; entries that must never be emitted are -inf.
class SequenceScorer {
 public:
  struct State {
    virtual ~State() = default;
  };
  using StatePtr = std::shared_ptr<const State>;

  struct Scores {
    std::vector<double> log_probs;
    StatePtr context;  // whatever extend() needs to build the successor
  };

  virtual ~SequenceScorer() = default;
  virtual LabelId sos() const = 0;
  virtual LabelId eos() const = 0;
  virtual StatePtr initial() const = 0;
  virtual Scores score(const StatePtr& state) const = 0;
  virtual StatePtr extend(const Scores& scores, LabelId label) const = 0;
};

// Attention decoder over a fixed encoder output, run without gradients.
class AttentionScorer final : public SequenceScorer {
 public:
  AttentionScorer(const Decoder& decoder, const Tensor& h, std::size_t num_labels);

  LabelId sos() const override { return decoder_.sos(); }
  LabelId eos() const override { return decoder_.eos(); }
  StatePtr initial() const override;
  Scores score(const StatePtr& state) const override;
  StatePtr extend(const Scores& scores, LabelId label) const override;

 private:
  const Decoder& decoder_;
  AttentionKeys keys_;
  std::size_t num_labels_;
};

struct BeamOptions {
  std::size_t beam = 20;
  // Most labels before <eos> is forced; 0 means 2 * L + 10.
  std::size_t max_len = 0;
  // Added to the ranking score once per emitted label (including <eos>).
  double length_penalty = 0.0;

  void validate() const;
  std::size_t resolve_max_len(std::size_t encoder_frames) const;
};

struct Hypothesis {
  std::vector<LabelId> tokens;  // starts with <sos>; ends with <eos> once finished
  double log_prob = 0.0;
  SequenceScorer::StatePtr state;
  bool finished = false;

  // Emitted labels between <sos> and <eos>.
  std::vector<LabelId> labels() const;
};

// Step-synchronous beam search. All live hypotheses are expanded by every
// label except <sos>; the `beam` best candidates survive, and those ending in
// <eos> move to the completed pool. Labels scored -inf are never proposed,
// except that a hypothesis holding max_len labels is always closed by <eos>. Completed hypotheses are returned best first;
// ties go to the lexicographically smaller token sequence.
std::vector<Hypothesis> beam_search(const SequenceScorer& scorer, const BeamOptions& options,
                                    std::size_t max_len);

// Argmax at every step, lowest id on ties.
Hypothesis greedy_search(const SequenceScorer& scorer, std::size_t max_len);

std::vector<Hypothesis> beam_search(const Model& model, const Tensor& features,
                                    const BeamOptions& options);
Hypothesis greedy_decode(const Model& model, const Tensor& features, std::size_t max_len = 0);

std::string hypothesis_text(const Hypothesis& hyp, const UnitTable& labels);

// "utt_id<TAB>rank<TAB>score<TAB>text", ranks from 1.
void write_nbest(std::ostream& out, const std::string& utt_id,
                 const std::vector<Hypothesis>& hyps, const UnitTable& labels);

}  // namespace hasr
