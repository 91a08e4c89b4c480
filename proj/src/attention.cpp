#include "hasr/attention.h"

#include <ostream>

#include "hasr/errors.h"

namespace hasr {

DecoderConfig DecoderConfig::large() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::desk() {
  DecoderConfig c;
  c.embed_dim = 64;
  c.state_dim = 64;
  c.att_dim = 64;
  c.num_filters = 10;
  c.filter_width = 5;
  return c;
}

void DecoderConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("decoder.embed_dim must be positive");
  if (state_dim == 0) throw ConfigError("decoder.state_dim must be positive");
  if (att_dim == 0) throw ConfigError("decoder.att_dim must be positive");
  if (num_filters == 0) throw ConfigError("decoder.num_filters must be positive");
  if (filter_width == 0) throw ConfigError("decoder.filter_width must be positive");
}

AttentionKeys prepare_keys(Tape& tape, const Tensor& h, const AttentionParams& params) {
  return {h, matmul(tape, h, params.v_enc)};
}

AttentionOutput location_attention(Tape& tape, const DecoderState& state,
                                   const AttentionKeys& keys, const AttentionParams& params) {
  const std::size_t frames = keys.h.rows();
  if (state.prev_weights.numel() != frames) {
    throw ContractError("previous attention covers " + std::to_string(state.prev_weights.numel()) +
                        " frames, encoder output has " + std::to_string(frames));
  }
  const Tensor loc = conv1d_frames(tape, state.prev_weights, params.filters);  // L x filters
  const Tensor query = linear(tape, state.s.h, params.w_state, params.bias);    // 1 x d_att
  const Tensor pre = add_row(tape, add(tape, keys.projected, matmul(tape, loc, params.m_loc)), query);
  const Tensor energies = matmul(tape, tanh(tape, pre), params.omega);  // L x 1
  const Tensor weights = softmax(tape, reshape(tape, energies, {1, frames}));
  return {matmul(tape, weights, keys.h), weights};
}

AttentionOutput location_attention(Tape& tape, const DecoderState& state, const Tensor& h,
                                   const AttentionParams& params) {
  return location_attention(tape, state, prepare_keys(tape, h, params), params);
}

StepOutput decoder_step(Tape& tape, const DecoderState& state, const AttentionOutput& attended,
                        const DecoderParams& params) {
  if (state.prev_label < 1 || decoder_index(state.prev_label) >= params.embedding.rows()) {
    throw ContractError("decoder state has no valid previous label");
  }
  const Tensor emb = row(tape, params.embedding, decoder_index(state.prev_label));
  const Tensor input = concat_cols(tape, {emb, attended.context});
  const LstmState s = lstm_step(tape, input, state.s, params.lstm);
  const Tensor logits = linear(tape, concat_cols(tape, {s.h, attended.context}), params.out_w,
                               params.out_b);
  return {DecoderState{s, attended.weights, -1}, logits};
}

Decoder::Decoder(DecoderConfig config, std::size_t encoder_dim, const UnitTable& labels,
                 ParamFactory& factory, const std::string& prefix)
    : config_(config), sos_(labels.sos()), eos_(labels.eos()) {
  config_.validate();
  const std::size_t out = labels.decoder_size();
  AttentionParams& a = params_.attention;
  a.omega = factory.uniform(prefix + ".att.omega", {config_.att_dim, 1});
  a.w_state = factory.uniform(prefix + ".att.w_state", {config_.state_dim, config_.att_dim});
  a.v_enc = factory.uniform(prefix + ".att.v_enc", {encoder_dim, config_.att_dim});
  a.m_loc = factory.uniform(prefix + ".att.m_loc", {config_.num_filters, config_.att_dim});
  a.bias = factory.uniform(prefix + ".att.bias", {config_.att_dim});
  a.filters = factory.uniform(prefix + ".att.filters", {config_.num_filters, config_.filter_width});
  params_.embedding = factory.uniform(prefix + ".embedding", {out, config_.embed_dim});
  params_.lstm = LstmParams::create(factory, prefix + ".lstm", config_.embed_dim + encoder_dim,
                                    config_.state_dim);
  params_.out_w = factory.uniform(prefix + ".out.w", {config_.state_dim + encoder_dim, out});
  params_.out_b = factory.uniform(prefix + ".out.b", {out});
}

DecoderState Decoder::initial_state(std::size_t frames) const {
  if (frames == 0) throw ContractError("attention over an empty encoder output");
  return DecoderState{LstmState::zeros(config_.state_dim),
                      Tensor::filled({1, frames}, 1.0 / static_cast<double>(frames)), sos_};
}

StepOutput Decoder::step(Tape& tape, const DecoderState& state, const AttentionKeys& keys,
                         AttentionOutput* attended) const {
  AttentionOutput att = location_attention(tape, state, keys, params_.attention);
  StepOutput out = decoder_step(tape, state, att, params_);
  if (attended) *attended = std::move(att);
  return out;
}

Tensor Decoder::nll(Tape& tape, const Tensor& h, std::span<const LabelId> targets,
                    std::vector<Tensor>* attention_rows) const {
  if (targets.empty()) throw ContractError("attention loss needs at least one target label");
  for (LabelId y : targets) {
    if (y == sos_ || y == eos_) throw ContractError("target sequence contains <sos> or <eos>");
    if (y < 1 || decoder_index(y) >= num_outputs()) {
      throw ContractError("target label " + std::to_string(y) + " is not a decoder output");
    }
  }
  const AttentionKeys keys = prepare_keys(tape, h, params_.attention);
  DecoderState state = initial_state(h.rows());
  std::vector<Tensor> logits;
  std::vector<std::size_t> gold;
  logits.reserve(targets.size() + 1);
  for (std::size_t u = 0; u <= targets.size(); ++u) {
    const LabelId next = u < targets.size() ? targets[u] : eos_;
    StepOutput out = step(tape, state, keys);
    if (attention_rows) attention_rows->push_back(out.state.prev_weights);
    logits.push_back(out.logits);
    gold.push_back(decoder_index(next));
    state = std::move(out.state);
    state.prev_label = next;
  }
  const Tensor log_probs = log_softmax(tape, stack_rows(tape, logits));
  return scale(tape, pick_sum(tape, log_probs, gold), -1.0);
}

void write_attention_matrix(std::ostream& out, const std::vector<Tensor>& rows) {
  for (const Tensor& r : rows) {
    for (std::size_t l = 0; l < r.numel(); ++l) {
      if (l) out << ' ';
      out << r.at(l);
    }
    out << '\n';
  }
}

}  // namespace hasr
