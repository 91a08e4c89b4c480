#include "hasr/hybrid.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "hasr/ctc.h"
#include "hasr/decode.h"
#include "hasr/errors.h"
#include "hasr/eval.h"
#include "hasr/model.h"

namespace hasr {

void HybridConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("hybrid.lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (batch_size == 0) throw ConfigError("hybrid.batch_size must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("hybrid.clip_norm must be positive");
  if (!(adadelta.rho > 0.0 && adadelta.rho < 1.0)) throw ConfigError("hybrid.rho must lie in (0, 1)");
  if (!(adadelta.epsilon > 0.0)) throw ConfigError("hybrid.epsilon must be positive");
}

double hybrid_loss(double ctc_loss, double att_loss, double lambda) {
  return lambda * ctc_loss + (1.0 - lambda) * att_loss;
}

std::vector<Example> make_examples(const std::vector<Utterance>& utterances,
                                   const UnitTable& labels, OovPolicy policy) {
  std::vector<Example> out;
  out.reserve(utterances.size());
  for (const Utterance& u : utterances) {
    Example ex;
    ex.id = u.id;
    ex.features = u.features;
    try {
      ex.labels = labels.encode_sentence(u.transcript, policy);
    } catch (const UserError& e) {
      throw ContractError("utterance " + u.id + ": " + e.what());
    }
    ex.transcript = u.transcript;
    out.push_back(std::move(ex));
  }
  return out;
}

bool trainable(const Model& model, const Example& ex, Objective objective) {
  const EncoderConfig& enc = model.config().encoder;
  if (ex.labels.empty()) return false;
  if (ex.features.rows() < enc.min_input_frames()) return false;
  if (objective == Objective::kAttentionOnly) return true;
  return ctc::min_frames(ex.labels) <= enc.output_length(ex.features.rows());
}

UtteranceLoss branch_losses(Tape& tape, const Model& model, const Tensor& h, const Example& ex,
                            double lambda, Objective objective) {
  UtteranceLoss out;
  Tensor ctc_loss;
  Tensor att_loss;
  try {
    if (objective != Objective::kAttentionOnly) {
      ctc_loss = ctc::loss(tape, model.ctc_logits(tape, h), ex.labels);
      out.ctc = ctc_loss.item();
    }
    if (objective != Objective::kCtcOnly) {
      att_loss = model.decoder().nll(tape, h, ex.labels);
      out.att = att_loss.item();
    }
  } catch (const NumericError& e) {
    throw NumericError("utterance " + ex.id + ": " + e.what());
  }
  switch (objective) {
    case Objective::kHybrid:
      out.total = weighted_sum(tape, ctc_loss, lambda, att_loss, 1.0 - lambda);
      break;
    case Objective::kCtcOnly:
      out.total = ctc_loss;
      break;
    case Objective::kAttentionOnly:
      out.total = att_loss;
      break;
  }
  if (!std::isfinite(out.total.item())) {
    throw NumericError("non-finite loss for utterance " + ex.id);
  }
  return out;
}

UtteranceLoss utterance_loss(Tape& tape, const Model& model, const Example& ex, double lambda,
                             Objective objective, Mode mode) {
  EncoderOutput enc;
  try {
    enc = model.encoder().encode(tape, ex.features, mode);
  } catch (const NumericError& e) {
    throw NumericError("utterance " + ex.id + ": " + e.what());
  }
  UtteranceLoss out = branch_losses(tape, model, enc.h, ex, lambda, objective);
  out.moments = std::move(enc.moments);
  return out;
}

Trainer::Trainer(Model& model, HybridConfig config, Objective objective)
    : model_(model), config_(config), objective_(objective) {
  config_.validate();
  optimizer_ = make_adadelta_state(model_.params(), config_.adadelta);
}

StepReport Trainer::step(const std::vector<const Example*>& batch) {
  StepReport report;
  std::vector<const Example*> used;
  std::vector<Tensor> inputs;
  for (const Example* ex : batch) {
    if (!trainable(model_, *ex, objective_)) {
      report.skipped.push_back(ex->id);
      continue;
    }
    used.push_back(ex);
    inputs.push_back(ex->features);
  }
  if (used.empty()) return report;

  Tape tape;
  EncodedBatch encoded;
  try {
    encoded = model_.encoder().encode_batch(tape, inputs, Mode::kTrain);
  } catch (const NumericError& e) {
    std::string ids;
    for (const Example* ex : used) ids += (ids.empty() ? "" : ", ") + ex->id;
    throw NumericError(std::string(e.what()) + " (batch: " + ids + ")");
  }
  Tensor total;
  for (std::size_t i = 0; i < used.size(); ++i) {
    const UtteranceLoss loss =
        branch_losses(tape, model_, encoded.outputs[i].h, *used[i], config_.lambda, objective_);
    total = i == 0 ? loss.total : add(tape, total, loss.total);
    report.loss_sum += loss.total.item();
  }
  report.used = used.size();

  GradList grads = zero_grads(model_.params());
  accumulate_grads(model_.params(), tape.backward(total), grads);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!all_finite(grads[i])) {
      throw NumericError("non-finite gradient for " + model_.params().name(i));
    }
  }
  report.grad_norm = clip_global_norm(grads, config_.clip_norm);
  adadelta_step(model_.params(), grads, optimizer_);
  model_.encoder().update_running_stats(encoded.moments);
  report.updated = true;
  return report;
}

double evaluate_loss(const Model& model, const std::vector<Example>& examples, double lambda,
                     Objective objective) {
  double total = 0.0;
  std::size_t used = 0;
  for (const Example& ex : examples) {
    if (!trainable(model, ex, objective)) continue;
    Tape tape(Tape::Mode::kInference);
    total += utterance_loss(tape, model, ex, lambda, objective, Mode::kInference).total.item();
    ++used;
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

double evaluate_wer(const Model& model, const std::vector<Example>& examples) {
  WerReport report;
  for (const Example& ex : examples) {
    std::string hyp;
    if (ex.features.rows() >= model.config().encoder.min_input_frames()) {
      hyp = hypothesis_text(greedy_decode(model, ex.features), model.labels());
    }
    const auto r = normalize_words(ex.transcript);
    report.add(align_words(r, normalize_words(hyp)).counts, r.size());
  }
  return report.wer();
}

std::vector<std::vector<const Example*>> make_batches(const std::vector<Example>& examples,
                                                      std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<const Example*> sorted;
  for (const Example& ex : examples) sorted.push_back(&ex);
  std::sort(sorted.begin(), sorted.end(), [](const Example* a, const Example* b) {
    if (a->features.rows() != b->features.rows()) return a->features.rows() < b->features.rows();
    return a->id < b->id;
  });
  std::vector<std::vector<const Example*>> batches;
  for (std::size_t i = 0; i < sorted.size(); i += batch_size) {
    const std::size_t end = std::min(sorted.size(), i + batch_size);
    batches.emplace_back(sorted.begin() + static_cast<std::ptrdiff_t>(i),
                         sorted.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::string format_metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%.8f\t%.8f\t%.4f\t%.3f", m.epoch, m.train_loss, m.dev_loss,
                m.dev_wer, m.wall_seconds);
  return buf;
}

namespace {

std::string epoch_checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%03zu.ckpt", epoch);
  return buf;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const HybridConfig& config,
                  const TrainOptions& options) {
  config.validate();
  Trainer trainer(model, config, options.objective);
  // Separate stream from the one that initialized the weights.
  Rng shuffle_rng(config.seed ^ 0x5bd1e9955bd1e995ULL);
  auto batches = make_batches(train_set, config.batch_size);

  std::ofstream metrics;
  if (options.outdir) {
    std::filesystem::create_directories(*options.outdir);
    metrics.open(*options.outdir / "metrics.tsv");
    if (!metrics) throw UserError("cannot write " + (*options.outdir / "metrics.tsv").string());
    metrics << "# seed " << config.seed << '\n' << kMetricsHeader << '\n';
    write_checkpoint(*options.outdir / epoch_checkpoint_name(0), model.to_checkpoint());
  }

  TrainResult result;
  result.best_wer = std::numeric_limits<double>::infinity();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = batches.size(); i > 1; --i) {
      std::swap(batches[i - 1], batches[shuffle_rng.below(i)]);
    }
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (const auto& batch : batches) {
      const StepReport r = trainer.step(batch);
      loss_sum += r.loss_sum;
      used += r.used;
      if (options.log) {
        for (const auto& id : r.skipped) *options.log << "skipping untrainable utterance " << id << '\n';
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = used ? loss_sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    m.dev_loss = evaluate_loss(model, dev_set, config.lambda, options.objective);
    m.dev_wer = evaluate_wer(model, dev_set);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(m);
    const bool best = m.dev_wer < result.best_wer;
    if (best) {
      result.best_wer = m.dev_wer;
      result.best_epoch = epoch;
    }
    if (options.outdir) {
      metrics << format_metrics_row(m) << '\n' << std::flush;
      const Checkpoint ckpt = model.to_checkpoint();
      write_checkpoint(*options.outdir / epoch_checkpoint_name(epoch), ckpt);
      if (best) write_checkpoint(*options.outdir / "best.ckpt", ckpt);
    }
    if (options.log) *options.log << "epoch " << format_metrics_row(m) << '\n' << std::flush;
    if (config.early_stop_wer >= 0.0 && m.dev_wer <= config.early_stop_wer) break;
  }
  return result;
}

}  // namespace hasr
