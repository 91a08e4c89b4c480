#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hasr/ops.h"
#include "hasr/parameters.h"
#include "hasr/tape.h"

namespace hasr {

enum class Mode { kTrain, kInference };

// Registers parameters with deterministic uniform initialization.
class ParamFactory {
 public:
  ParamFactory(ParameterSet& params, Rng& rng, double scale)
      : params_(params), rng_(rng), scale_(scale) {}

  Tensor uniform(const std::string& name, Shape shape);
  Tensor constant(const std::string& name, Shape shape, double value);

 private:
  ParameterSet& params_;
  Rng& rng_;
  double scale_;
};

struct LstmParams {
  Tensor w_input;      // d_in x 4c, gate blocks [i | f | g | o]
  Tensor w_recurrent;  // c x 4c
  Tensor bias;         // 4c

  static LstmParams create(ParamFactory& factory, const std::string& prefix, std::size_t input_dim,
                           std::size_t cells);
  std::size_t cells() const { return w_recurrent.rows(); }
};

struct LstmState {
  Tensor h;  // 1 x c
  Tensor c;  // 1 x c

  static LstmState zeros(std::size_t cells);
};

LstmState lstm_step(Tape& tape, const Tensor& x, const LstmState& prev, const LstmParams& params);
// Step with the input projection x * w_input + bias already applied.
LstmState lstm_step_projected(Tape& tape, const Tensor& projected, const LstmState& prev,
                              const LstmParams& params);

struct BlstmParams {
  LstmParams forward;
  LstmParams backward;
};

// Forward pass over t = 0..T-1 and backward pass over t = T-1..0, outputs
// concatenated per frame: T x 2c.
Tensor blstm_layer(Tape& tape, const Tensor& seq, const BlstmParams& params);

// Row indices 0, factor, 2*factor, ... of a length-T sequence.
std::vector<std::size_t> subsample_indices(std::size_t frames, std::size_t factor);
Tensor subsample(Tape& tape, const Tensor& seq, std::size_t factor);

struct EncoderConfig {
  std::size_t input_dim = 40;
  std::size_t num_layers = 8;
  std::size_t cells = 320;
  // 1-based layers whose input is subsampled.
  std::vector<std::size_t> subsample_layers = {7, 8};
  std::size_t subsample_factor = 2;
  bool batch_norm = true;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  static EncoderConfig large(std::size_t input_dim = 40);
  static EncoderConfig desk(std::size_t input_dim = 40);

  void validate() const;
  std::size_t output_dim() const { return 2 * cells; }
  bool subsamples(std::size_t layer) const;
  std::size_t min_input_frames() const;
  std::size_t output_length(std::size_t frames) const;
};

struct EncoderOutput {
  Tensor h;                             // L x 2c
  std::vector<std::size_t> frame_map;   // input frame of each output row
  std::vector<ColumnMoments> moments;   // per-layer batch-norm statistics (training mode)
};

struct EncodedBatch {
  std::vector<EncoderOutput> outputs;   // moments left empty
  std::vector<ColumnMoments> moments;   // per layer, pooled over every frame of the batch
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig config, ParamFactory& factory, ParameterSet& buffers,
          const std::string& prefix = "enc");

  const EncoderConfig& config() const { return config_; }

  EncoderOutput encode(Tape& tape, const Tensor& x, Mode mode) const;
  // Training-mode batch normalization pools statistics over all frames of
  // all utterances; in inference mode this equals encoding one at a time.
  EncodedBatch encode_batch(Tape& tape, const std::vector<Tensor>& xs, Mode mode) const;

  // Folds training-mode batch statistics into the running averages used at
  // inference time.
  void update_running_stats(const std::vector<ColumnMoments>& moments);

 private:
  struct Layer {
    BlstmParams blstm;
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
  };

  EncoderConfig config_;
  std::vector<Layer> layers_;
};

}  // namespace hasr
