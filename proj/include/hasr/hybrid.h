#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hasr/encoder.h"
#include "hasr/features.h"
#include "hasr/optim.h"
#include "hasr/units.h"

namespace hasr {

class Model;

struct HybridConfig {
  double lambda = 0.2;  // weight of the CTC loss
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double clip_norm = 5.0;
  AdadeltaOptions adadelta;
  std::uint64_t seed = 1;
  // Stop after an epoch whose dev WER (percent) is at or below this; negative disables.
  double early_stop_wer = -1.0;

  void validate() const;
};

// L = lambda * L_ctc + (1 - lambda) * L_att.
double hybrid_loss(double ctc_loss, double att_loss, double lambda);

// kCtcOnly and kAttentionOnly train a single branch; kHybrid always evaluates
// both and weights them.
enum class Objective { kHybrid, kCtcOnly, kAttentionOnly };

struct Example {
  std::string id;
  Tensor features;               // T x dim
  std::vector<LabelId> labels;   // unit ids, no <sos>/<eos>
  std::string transcript;
};

std::vector<Example> make_examples(const std::vector<Utterance>& utterances,
                                   const UnitTable& labels, OovPolicy policy = OovPolicy::kReject);

struct UtteranceLoss {
  Tensor total;
  double ctc = 0.0;
  double att = 0.0;
  std::vector<ColumnMoments> moments;
};

UtteranceLoss utterance_loss(Tape& tape, const Model& model, const Example& ex, double lambda,
                             Objective objective, Mode mode);
// Both branches from an already computed encoder output h. moments stay empty.
UtteranceLoss branch_losses(Tape& tape, const Model& model, const Tensor& h, const Example& ex,
                            double lambda, Objective objective);

// Whether the example can be trained under the objective: enough frames for
// the encoder and, when CTC is involved, for its alignment.
bool trainable(const Model& model, const Example& ex, Objective objective);

struct StepReport {
  double loss_sum = 0.0;
  std::size_t used = 0;
  std::vector<std::string> skipped;
  double grad_norm = 0.0;
  bool updated = false;
};

class Trainer {
 public:
  Trainer(Model& model, HybridConfig config, Objective objective = Objective::kHybrid);

  // The batch is encoded together (batch norm pools over all its frames), the
  // summed loss is differentiated once, gradients are clipped, one Adadelta
  // update is applied, then the batch-norm running statistics. Untrainable
  // utterances are skipped and logged; a batch with nothing left makes no
  // update.
  StepReport step(const std::vector<const Example*>& batch);

  const AdadeltaState& optimizer() const { return optimizer_; }

 private:
  Model& model_;
  HybridConfig config_;
  Objective objective_;
  AdadeltaState optimizer_;
};

// Mean hybrid loss over the trainable examples, inference mode.
double evaluate_loss(const Model& model, const std::vector<Example>& examples, double lambda,
                     Objective objective = Objective::kHybrid);

// Greedy-decoding WER in percent.
double evaluate_wer(const Model& model, const std::vector<Example>& examples);

// Examples sorted by (frames, id), cut into consecutive batches.
std::vector<std::vector<const Example*>> make_batches(const std::vector<Example>& examples,
                                                      std::size_t batch_size);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_wer = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_wer = 0.0;
};

struct TrainOptions {
  Objective objective = Objective::kHybrid;
  // Metrics log, epoch checkpoints and best.ckpt go here when set.
  std::optional<std::filesystem::path> outdir;
  std::ostream* log = nullptr;
};

// Runs config.epochs epochs with the batch order reshuffled each epoch from
// config.seed. Dev loss and greedy WER are measured after every epoch.
TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const HybridConfig& config,
                  const TrainOptions& options = {});

inline constexpr const char* kMetricsHeader = "epoch\ttrain_loss\tdev_loss\tdev_wer\twall_seconds";
std::string format_metrics_row(const EpochMetrics& m);

}  // namespace hasr
