#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "hasr/tape.h"
#include "hasr/tensor.h"
#include "hasr/units.h"

namespace hasr::ctc {

// Blank-interleaved target: (blank, y1, blank, y2, ..., blank), length 2U+1.
std::vector<LabelId> expand_labels(std::span<const LabelId> labels);

// Frames needed to emit `labels`: one per label plus one blank between each
// pair of equal neighbours.
std::size_t min_frames(std::span<const LabelId> labels);

// Merges repeated neighbours, then drops blanks.
std::vector<LabelId> collapse_path(std::span<const LabelId> path);

// Sum over every frame-level path that collapses to `labels`, computed by
// enumeration in the probability domain. `probs` is L x (K+1). Exponential in
// L; intended as a reference for small cases. Returns -inf when no path fits.
double brute_force_log_likelihood(const Tensor& probs, std::span<const LabelId> labels);

// Log-domain forward and backward variables over the expanded labels. Both
// include the emission at their own frame, so for every frame l
//   log p(y|x) = logsumexp_s(log_alpha[l,s] + log_beta[l,s] - log q[l, z_s]).
struct Lattice {
  std::vector<LabelId> expanded;
  std::size_t frames = 0;
  std::vector<double> log_alpha;  // frames x expanded.size(), row-major
  std::vector<double> log_beta;
  double log_likelihood = 0.0;

  double alpha(std::size_t l, std::size_t s) const { return log_alpha[l * expanded.size() + s]; }
  double beta(std::size_t l, std::size_t s) const { return log_beta[l * expanded.size() + s]; }
};

// From log-probabilities (L x (K+1)). Throws UnalignableError if the target
// cannot fit in L frames.
Lattice forward_backward_log(const Tensor& log_probs, std::span<const LabelId> labels);
// Same, from probabilities.
Lattice forward_backward(const Tensor& probs, std::span<const LabelId> labels);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

// -log p(y|x) with q = softmax(logits) row-wise, and its gradient
//   dL/dlogit[l,k] = q[l,k] - exp(logsumexp_{s: z_s = k}(alpha + beta) - log q[l,k] - log p)
LossAndGrad loss_and_grad(const Tensor& logits, std::span<const LabelId> labels);

// Tape op producing the scalar CTC loss of `logits`.
Tensor loss(Tape& tape, const Tensor& logits, std::span<const LabelId> labels);

// Debug dump: "l s log_alpha log_beta" per line.
void write_lattice(std::ostream& out, const Lattice& lattice);

}  // namespace hasr::ctc
