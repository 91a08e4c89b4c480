#include "hasr/encoder.h"

#include <algorithm>

#include "hasr/errors.h"

namespace hasr {

Tensor ParamFactory::uniform(const std::string& name, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  init_uniform(t, rng_, scale_);
  return params_.add(name, t);
}

Tensor ParamFactory::constant(const std::string& name, Shape shape, double value) {
  return params_.add(name, Tensor::filled(std::move(shape), value, true));
}

LstmParams LstmParams::create(ParamFactory& factory, const std::string& prefix,
                              std::size_t input_dim, std::size_t cells) {
  LstmParams p;
  p.w_input = factory.uniform(prefix + ".w_input", {input_dim, 4 * cells});
  p.w_recurrent = factory.uniform(prefix + ".w_recurrent", {cells, 4 * cells});
  p.bias = factory.uniform(prefix + ".bias", {4 * cells});
  return p;
}

LstmState LstmState::zeros(std::size_t cells) {
  return {Tensor::zeros({1, cells}), Tensor::zeros({1, cells})};
}

LstmState lstm_step(Tape& tape, const Tensor& x, const LstmState& prev, const LstmParams& params) {
  if (x.cols() != params.w_input.rows()) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) + " does not match " +
                         shape_string(params.w_input.shape()));
  }
  return lstm_step_projected(tape, linear(tape, x, params.w_input, params.bias), prev, params);
}

LstmState lstm_step_projected(Tape& tape, const Tensor& projected, const LstmState& prev,
                              const LstmParams& params) {
  if (prev.h.cols() != params.cells() || prev.c.cols() != params.cells()) {
    throw DimensionError("lstm_step: state " + shape_string(prev.h.shape()) + " does not match " +
                         std::to_string(params.cells()) + " cells");
  }
  const Tensor gates = add(tape, projected, matmul(tape, prev.h, params.w_recurrent));
  LstmCellOutput out = lstm_cell(tape, gates, prev.c);
  return {out.h, out.c};
}

Tensor blstm_layer(Tape& tape, const Tensor& seq, const BlstmParams& params) {
  const std::size_t T = seq.rows();
  const Tensor proj_f = linear(tape, seq, params.forward.w_input, params.forward.bias);
  const Tensor proj_b = linear(tape, seq, params.backward.w_input, params.backward.bias);

  std::vector<Tensor> fwd(T), bwd(T);
  LstmState s = LstmState::zeros(params.forward.cells());
  for (std::size_t t = 0; t < T; ++t) {
    s = lstm_step_projected(tape, row(tape, proj_f, t), s, params.forward);
    fwd[t] = s.h;
  }
  s = LstmState::zeros(params.backward.cells());
  for (std::size_t t = T; t-- > 0;) {
    s = lstm_step_projected(tape, row(tape, proj_b, t), s, params.backward);
    bwd[t] = s.h;
  }
  return concat_cols(tape, {stack_rows(tape, fwd), stack_rows(tape, bwd)});
}

std::vector<std::size_t> subsample_indices(std::size_t frames, std::size_t factor) {
  if (factor == 0) throw ConfigError("subsample factor must be at least 1");
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < frames; t += factor) idx.push_back(t);
  return idx;
}

Tensor subsample(Tape& tape, const Tensor& seq, std::size_t factor) {
  const std::vector<std::size_t> idx = subsample_indices(seq.rows(), factor);
  return select_rows(tape, seq, idx);
}

EncoderConfig EncoderConfig::large(std::size_t input_dim) {
  EncoderConfig c;
  c.input_dim = input_dim;
  return c;
}

EncoderConfig EncoderConfig::desk(std::size_t input_dim) {
  EncoderConfig c;
  c.input_dim = input_dim;
  c.num_layers = 2;
  c.cells = 64;
  c.subsample_layers = {1, 2};
  return c;
}

void EncoderConfig::validate() const {
  if (input_dim == 0) throw ConfigError("encoder.input_dim must be positive");
  if (num_layers == 0) throw ConfigError("encoder.num_layers must be positive");
  if (cells == 0) throw ConfigError("encoder.cells must be positive");
  if (subsample_factor == 0) throw ConfigError("encoder.subsample_factor must be at least 1");
  for (std::size_t l : subsample_layers) {
    if (l < 1 || l > num_layers) {
      throw ConfigError("encoder.subsample_layers entry " + std::to_string(l) +
                        " is outside 1.." + std::to_string(num_layers));
    }
  }
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) {
    throw ConfigError("encoder.bn_momentum must be in [0,1)");
  }
}

bool EncoderConfig::subsamples(std::size_t layer) const {
  return std::find(subsample_layers.begin(), subsample_layers.end(), layer) !=
         subsample_layers.end();
}

std::size_t EncoderConfig::min_input_frames() const {
  std::size_t n = 1;
  for (std::size_t l = 1; l <= num_layers; ++l) {
    if (subsamples(l)) n *= subsample_factor;
  }
  return n;
}

std::size_t EncoderConfig::output_length(std::size_t frames) const {
  for (std::size_t l = 1; l <= num_layers; ++l) {
    if (subsamples(l)) frames = (frames + subsample_factor - 1) / subsample_factor;
  }
  return frames;
}

Encoder::Encoder(EncoderConfig config, ParamFactory& factory, ParameterSet& buffers,
                 const std::string& prefix)
    : config_(std::move(config)) {
  config_.validate();
  std::size_t in_dim = config_.input_dim;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string name = prefix + ".l" + std::to_string(l);
    Layer layer;
    layer.blstm.forward = LstmParams::create(factory, name + ".fwd", in_dim, config_.cells);
    layer.blstm.backward = LstmParams::create(factory, name + ".bwd", in_dim, config_.cells);
    if (config_.batch_norm) {
      const std::size_t d = config_.output_dim();
      layer.gamma = factory.constant(name + ".bn.gamma", {d}, 1.0);
      layer.beta = factory.constant(name + ".bn.beta", {d}, 0.0);
      layer.running_mean = buffers.add(name + ".bn.running_mean", Tensor::zeros({d}));
      layer.running_var = buffers.add(name + ".bn.running_var", Tensor::filled({d}, 1.0));
    }
    layers_.push_back(std::move(layer));
    in_dim = config_.output_dim();
  }
}

EncoderOutput Encoder::encode(Tape& tape, const Tensor& x, Mode mode) const {
  EncodedBatch batch = encode_batch(tape, {x}, mode);
  EncoderOutput out = std::move(batch.outputs.front());
  out.moments = std::move(batch.moments);
  return out;
}

EncodedBatch Encoder::encode_batch(Tape& tape, const std::vector<Tensor>& xs, Mode mode) const {
  if (xs.empty()) throw ContractError("encoder batch is empty");
  EncodedBatch batch;
  std::vector<Tensor> cur;
  for (const Tensor& x : xs) {
    if (x.cols() != config_.input_dim) {
      throw DimensionError("encoder input " + shape_string(x.shape()) + " does not have " +
                           std::to_string(config_.input_dim) + " feature columns");
    }
    if (x.rows() < config_.min_input_frames()) {
      throw ContractError("input of " + std::to_string(x.rows()) +
                          " frames is too short for the subsampling schedule (needs " +
                          std::to_string(config_.min_input_frames()) + ")");
    }
    EncoderOutput out;
    out.frame_map.resize(x.rows());
    for (std::size_t t = 0; t < x.rows(); ++t) out.frame_map[t] = t;
    batch.outputs.push_back(std::move(out));
    cur.push_back(x);
  }

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (config_.subsamples(l + 1)) {
        const std::vector<std::size_t> idx =
            subsample_indices(cur[i].rows(), config_.subsample_factor);
        cur[i] = select_rows(tape, cur[i], idx);
        std::vector<std::size_t>& map = batch.outputs[i].frame_map;
        std::vector<std::size_t> mapped;
        mapped.reserve(idx.size());
        for (std::size_t j : idx) mapped.push_back(map[j]);
        map = std::move(mapped);
      }
      cur[i] = blstm_layer(tape, cur[i], layer.blstm);
    }
    if (!config_.batch_norm) continue;
    if (mode == Mode::kTrain) {
      ColumnMoments m;
      if (cur.size() == 1) {
        cur[0] = batch_norm_time(tape, cur[0], layer.gamma, layer.beta, config_.bn_eps, &m);
      } else {
        const Tensor normed =
            batch_norm_time(tape, concat_rows(tape, cur), layer.gamma, layer.beta, config_.bn_eps, &m);
        std::size_t begin = 0;
        for (Tensor& c : cur) {
          const std::size_t rows = c.rows();
          c = slice_rows(tape, normed, begin, begin + rows);
          begin += rows;
        }
      }
      batch.moments.push_back(std::move(m));
    } else {
      const ColumnMoments running{layer.running_mean.buffer(), layer.running_var.buffer()};
      for (Tensor& c : cur) {
        c = batch_norm_fixed(tape, c, running, layer.gamma, layer.beta, config_.bn_eps);
      }
    }
  }
  for (std::size_t i = 0; i < cur.size(); ++i) batch.outputs[i].h = cur[i];
  return batch;
}

void Encoder::update_running_stats(const std::vector<ColumnMoments>& moments) {
  if (!config_.batch_norm) return;
  if (moments.size() != layers_.size()) {
    throw ContractError("batch-norm statistics do not match the encoder layers");
  }
  const double m = config_.bn_momentum;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto mean = layers_[l].running_mean.mutable_data();
    auto var = layers_[l].running_var.mutable_data();
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] = m * mean[j] + (1.0 - m) * moments[l].mean[j];
      var[j] = m * var[j] + (1.0 - m) * moments[l].var[j];
    }
  }
}

}  // namespace hasr
