#include "hasr/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "hasr/errors.h"
#include "hasr/ops.h"

namespace hasr::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

void check_labels(std::span<const LabelId> labels, std::size_t classes) {
  for (LabelId y : labels) {
    if (y <= UnitTable::kBlank || static_cast<std::size_t>(y) >= classes) {
      throw ContractError("CTC label " + std::to_string(y) + " outside 1.." +
                          std::to_string(classes - 1));
    }
  }
}

}  // namespace

std::vector<LabelId> expand_labels(std::span<const LabelId> labels) {
  std::vector<LabelId> z(2 * labels.size() + 1, UnitTable::kBlank);
  for (std::size_t u = 0; u < labels.size(); ++u) z[2 * u + 1] = labels[u];
  return z;
}

std::size_t min_frames(std::span<const LabelId> labels) {
  std::size_t n = labels.size();
  for (std::size_t u = 1; u < labels.size(); ++u) {
    if (labels[u] == labels[u - 1]) ++n;
  }
  return n;
}

std::vector<LabelId> collapse_path(std::span<const LabelId> path) {
  std::vector<LabelId> out;
  for (std::size_t l = 0; l < path.size(); ++l) {
    if (l > 0 && path[l] == path[l - 1]) continue;
    if (path[l] != UnitTable::kBlank) out.push_back(path[l]);
  }
  return out;
}

double brute_force_log_likelihood(const Tensor& probs, std::span<const LabelId> labels) {
  const std::size_t frames = probs.rows(), classes = probs.cols();
  check_labels(labels, classes);
  const std::vector<LabelId> target(labels.begin(), labels.end());
  std::vector<LabelId> path(frames, 0);
  double total = 0.0;
  while (true) {
    if (collapse_path(path) == target) {
      double p = 1.0;
      for (std::size_t l = 0; l < frames; ++l) p *= probs.at(l, static_cast<std::size_t>(path[l]));
      total += p;
    }
    // Odometer increment over (K+1)^L paths.
    std::size_t l = 0;
    while (l < frames && static_cast<std::size_t>(++path[l]) == classes) path[l++] = 0;
    if (l == frames) break;
  }
  return total > 0.0 ? std::log(total) : kNegInf;
}

Lattice forward_backward_log(const Tensor& log_probs, std::span<const LabelId> labels) {
  const std::size_t frames = log_probs.rows(), classes = log_probs.cols();
  if (frames == 0) throw DimensionError("CTC needs at least one frame");
  check_labels(labels, classes);
  if (min_frames(labels) > frames) {
    throw UnalignableError("target of " + std::to_string(labels.size()) + " labels needs " +
                           std::to_string(min_frames(labels)) + " frames, input has " +
                           std::to_string(frames));
  }

  Lattice lat;
  lat.expanded = expand_labels(labels);
  lat.frames = frames;
  const std::vector<LabelId>& z = lat.expanded;
  const std::size_t S = z.size();
  lat.log_alpha.assign(frames * S, kNegInf);
  lat.log_beta.assign(frames * S, kNegInf);
  auto lq = [&](std::size_t l, std::size_t s) {
    return log_probs.at(l, static_cast<std::size_t>(z[s]));
  };
  // A path may jump over a blank unless that would merge two equal labels.
  auto can_skip = [&](std::size_t s) { return s >= 2 && z[s] != UnitTable::kBlank && z[s] != z[s - 2]; };

  double* alpha = lat.log_alpha.data();
  alpha[0] = lq(0, 0);
  if (S > 1) alpha[1] = lq(0, 1);
  for (std::size_t l = 1; l < frames; ++l) {
    const double* prev = alpha + (l - 1) * S;
    double* cur = alpha + l * S;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (can_skip(s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + lq(l, s);
    }
  }

  double* beta = lat.log_beta.data();
  const std::size_t last = frames - 1;
  beta[last * S + S - 1] = lq(last, S - 1);
  if (S > 1) beta[last * S + S - 2] = lq(last, S - 2);
  for (std::size_t l = last; l-- > 0;) {
    const double* next = beta + (l + 1) * S;
    double* cur = beta + l * S;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = next[s];
      if (s + 1 < S) acc = log_add(acc, next[s + 1]);
      if (s + 2 < S && can_skip(s + 2)) acc = log_add(acc, next[s + 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + lq(l, s);
    }
  }

  const double* final_row = alpha + last * S;
  lat.log_likelihood = S > 1 ? log_add(final_row[S - 1], final_row[S - 2]) : final_row[0];
  return lat;
}

Lattice forward_backward(const Tensor& probs, std::span<const LabelId> labels) {
  Buffer logs(probs.numel());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(probs.at(i));
  return forward_backward_log(Tensor(probs.shape(), std::move(logs)), labels);
}

LossAndGrad loss_and_grad(const Tensor& logits, std::span<const LabelId> labels) {
  Tape scratch(Tape::Mode::kInference);
  const Tensor log_q = log_softmax(scratch, logits);
  const Lattice lat = forward_backward_log(log_q, labels);
  const double log_p = lat.log_likelihood;
  if (!std::isfinite(log_p)) throw NumericError("CTC likelihood is not finite");

  const std::size_t frames = logits.rows(), classes = logits.cols();
  const std::size_t S = lat.expanded.size();
  Buffer grad(frames * classes);
  std::vector<double> occupancy(classes);
  for (std::size_t l = 0; l < frames; ++l) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const auto k = static_cast<std::size_t>(lat.expanded[s]);
      occupancy[k] = log_add(occupancy[k], lat.alpha(l, s) + lat.beta(l, s));
    }
    for (std::size_t k = 0; k < classes; ++k) {
      const double lqk = log_q.at(l, k);
      const double q = std::exp(lqk);
      const double posterior =
          occupancy[k] == kNegInf ? 0.0 : std::exp(occupancy[k] - lqk - log_p);
      grad[l * classes + k] = q - posterior;
    }
  }
  return {-log_p, Tensor(logits.shape(), std::move(grad))};
}

Tensor loss(Tape& tape, const Tensor& logits, std::span<const LabelId> labels) {
  LossAndGrad lg = loss_and_grad(logits, labels);
  const bool track = tape.tracks({&logits});
  Tensor y = tape.output({}, Buffer{lg.loss}, track);
  if (track) {
    tape.record({y}, [logits, y, g = std::move(lg.grad)](Tape& t) {
      const double scale = (*t.grad_if_any(y))[0];
      Buffer& gl = t.grad(logits);
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += scale * g.at(i);
    });
  }
  return y;
}

void write_lattice(std::ostream& out, const Lattice& lattice) {
  const std::size_t S = lattice.expanded.size();
  for (std::size_t l = 0; l < lattice.frames; ++l) {
    for (std::size_t s = 0; s < S; ++s) {
      out << l << ' ' << s << ' ' << lattice.alpha(l, s) << ' ' << lattice.beta(l, s) << '\n';
    }
  }
}

}  // namespace hasr::ctc
