#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hasr/encoder.h"
#include "hasr/units.h"

namespace hasr {

struct DecoderConfig {
  std::size_t embed_dim = 320;
  std::size_t state_dim = 320;
  std::size_t att_dim = 320;
  std::size_t num_filters = 10;
  std::size_t filter_width = 100;

  static DecoderConfig large();
  static DecoderConfig desk();
  void validate() const;
};

// Energies e_l = omega^T tanh(W s + V h_l + M f_l + b) with f = F * a_prev.
struct AttentionParams {
  Tensor omega;    // d_att x 1
  Tensor w_state;  // d_s x d_att
  Tensor v_enc;    // d_h x d_att
  Tensor m_loc;    // filters x d_att
  Tensor bias;     // d_att
  Tensor filters;  // filters x width
};

struct DecoderParams {
  AttentionParams attention;
  Tensor embedding;  // (K+2) x embed, row = decoder_index(label)
  LstmParams lstm;   // input: [embedding | context]
  Tensor out_w;      // (d_s + d_h) x (K+2), input: [s | context]
  Tensor out_b;      // K+2
};

struct DecoderState {
  LstmState s;
  Tensor prev_weights;  // 1 x L
  LabelId prev_label = -1;
};

// Encoder frames with their attention projection V h_l computed once.
struct AttentionKeys {
  Tensor h;          // L x d_h
  Tensor projected;  // L x d_att
};

struct AttentionOutput {
  Tensor context;  // 1 x d_h
  Tensor weights;  // 1 x L
};

struct StepOutput {
  DecoderState state;  // s_u and a_u; prev_label still unset
  Tensor logits;       // 1 x (K+2)
};

AttentionKeys prepare_keys(Tape& tape, const Tensor& h, const AttentionParams& params);

AttentionOutput location_attention(Tape& tape, const DecoderState& state,
                                   const AttentionKeys& keys, const AttentionParams& params);
AttentionOutput location_attention(Tape& tape, const DecoderState& state, const Tensor& h,
                                   const AttentionParams& params);

// LSTM update from [embed(prev_label) | context] and the output layer over
// [s | context]. `weights` becomes the new state's prev_weights.
StepOutput decoder_step(Tape& tape, const DecoderState& state, const AttentionOutput& attended,
                        const DecoderParams& params);

class Decoder {
 public:
  Decoder() = default;
  Decoder(DecoderConfig config, std::size_t encoder_dim, const UnitTable& labels,
          ParamFactory& factory, const std::string& prefix = "dec");

  const DecoderConfig& config() const { return config_; }
  const DecoderParams& params() const { return params_; }
  LabelId sos() const { return sos_; }
  LabelId eos() const { return eos_; }
  std::size_t num_outputs() const { return params_.out_b.numel(); }

  // s_0 = 0, a_0 uniform over the L frames, previous label <sos>.
  DecoderState initial_state(std::size_t frames) const;

  // Attention, recurrence, and output layer for one label position.
  StepOutput step(Tape& tape, const DecoderState& state, const AttentionKeys& keys,
                  AttentionOutput* attended = nullptr) const;

  // Teacher-forced -log p(y_1..y_U, <eos> | h).
  Tensor nll(Tape& tape, const Tensor& h, std::span<const LabelId> targets,
             std::vector<Tensor>* attention_rows = nullptr) const;

 private:
  DecoderConfig config_;
  DecoderParams params_;
  LabelId sos_ = 0;
  LabelId eos_ = 0;
};

// Debug dump of U rows x L columns of attention weights.
void write_attention_matrix(std::ostream& out, const std::vector<Tensor>& rows);

}  // namespace hasr
