#pragma once

#include <cstdint>
#include <memory>

#include "hasr/attention.h"
#include "hasr/checkpoint.h"
#include "hasr/encoder.h"
#include "hasr/units.h"

namespace hasr {

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::desk();
  DecoderConfig decoder = DecoderConfig::desk();
  double init_scale = 0.1;
  std::uint64_t seed = 1;
};

// Shared encoder feeding a CTC output layer and the attention decoder.
class Model {
 public:
  Model(ModelConfig config, UnitTable labels);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  const UnitTable& labels() const { return labels_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ParameterSet& buffers() const { return buffers_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }

  // L x (K+1) CTC logits from encoder output.
  Tensor ctc_logits(Tape& tape, const Tensor& h) const;

  Checkpoint to_checkpoint() const;
  // Rebuilds the architecture from the checkpoint metadata and copies values.
  // Fails if the unit table does not have the checkpoint's unit count.
  static Model from_checkpoint(const Checkpoint& ckpt, UnitTable labels);
  Model clone() const;

 private:
  ModelConfig config_;
  UnitTable labels_;
  ParameterSet params_;
  ParameterSet buffers_;
  Encoder encoder_;
  Tensor ctc_w_;
  Tensor ctc_b_;
  Decoder decoder_;
};

}  // namespace hasr
