#include "hasr/model.h"

#include <json.hpp>

#include "hasr/config.h"
#include "hasr/errors.h"
#include "hasr/ops.h"

namespace hasr {

Model::Model(ModelConfig config, UnitTable labels)
    : config_(std::move(config)), labels_(std::move(labels)) {
  Rng rng(config_.seed);
  ParamFactory factory(params_, rng, config_.init_scale);
  encoder_ = Encoder(config_.encoder, factory, buffers_);
  const std::size_t d = config_.encoder.output_dim();
  ctc_w_ = factory.uniform("ctc.w", {d, labels_.ctc_size()});
  ctc_b_ = factory.uniform("ctc.b", {labels_.ctc_size()});
  decoder_ = Decoder(config_.decoder, d, labels_, factory);
}

Tensor Model::ctc_logits(Tape& tape, const Tensor& h) const {
  return linear(tape, h, ctc_w_, ctc_b_);
}

Checkpoint Model::to_checkpoint() const {
  nlohmann::json meta;
  meta["format"] = "hasr-model";
  meta["num_units"] = labels_.num_units();
  meta["init_scale"] = config_.init_scale;
  meta["seed"] = config_.seed;
  meta["encoder"] = encoder_to_json(config_.encoder);
  meta["decoder"] = decoder_to_json(config_.decoder);
  Checkpoint ckpt;
  ckpt.metadata = meta.dump();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.entries.push_back({params_.name(i), params_.tensor(i)});
  }
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    ckpt.entries.push_back({buffers_.name(i), buffers_.tensor(i)});
  }
  return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt, UnitTable labels) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (meta.value("format", "") != "hasr-model") throw ParseError("checkpoint is not a model");
  const auto units = meta.at("num_units").get<std::size_t>();
  if (units != labels.num_units()) {
    throw ContractError("checkpoint was trained with " + std::to_string(units) +
                        " subword units but the unit table has " +
                        std::to_string(labels.num_units()));
  }
  ModelConfig config;
  config.init_scale = meta.at("init_scale").get<double>();
  config.seed = meta.at("seed").get<std::uint64_t>();
  config.encoder = encoder_from_json(meta.at("encoder"), EncoderConfig::large());
  config.decoder = decoder_from_json(meta.at("decoder"), DecoderConfig::large());
  Model model(config, std::move(labels));

  auto load = [&](ParameterSet& set) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Tensor* src = ckpt.find(set.name(i));
      if (!src) throw ParseError("checkpoint is missing " + set.name(i));
      if (src->shape() != set.tensor(i).shape()) {
        throw DimensionError("checkpoint entry " + set.name(i) + " has shape " +
                             shape_string(src->shape()) + ", model expects " +
                             shape_string(set.tensor(i).shape()));
      }
      std::copy(src->data().begin(), src->data().end(), set.tensor(i).mutable_data().begin());
    }
  };
  load(model.params_);
  load(model.buffers_);
  return model;
}

Model Model::clone() const { return from_checkpoint(to_checkpoint(), labels_); }

}  // namespace hasr
