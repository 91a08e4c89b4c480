#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hasr/attention.h"
#include "hasr/decode.h"
#include "hasr/encoder.h"
#include "hasr/hybrid.h"
#include "hasr/model.h"
#include "hasr/tokenizer.h"

namespace hasr {

inline constexpr int kConfigVersion = 1;

struct TokenizerConfig {
  // 472 merges over 27 characters plus '_' gives a 500-unit inventory.
  std::size_t num_merges = 472;
  std::string alphabet{kDefaultAlphabet};
  OovPolicy oov_policy = OovPolicy::kReject;
};

struct FeatureConfig {
  std::size_t num_mel = 40;
  bool cmvn = true;
};

struct PathConfig {
  std::string units;
  std::string merges;
};

// Everything a run needs. Loaded from a JSON document whose sections mirror
// the members below; "profile" ("desk" or "large") picks the encoder/decoder
// defaults before explicit keys are applied. Unknown keys are rejected.
struct RunConfig {
  int version = kConfigVersion;
  std::string profile = "desk";
  TokenizerConfig tokenizer;
  FeatureConfig features;
  EncoderConfig encoder = EncoderConfig::desk();
  DecoderConfig decoder = DecoderConfig::desk();
  HybridConfig hybrid;
  BeamOptions decode;
  PathConfig paths;

  ModelConfig model() const;
  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json encoder_to_json(const EncoderConfig& c);
EncoderConfig encoder_from_json(const nlohmann::json& j, EncoderConfig base);
nlohmann::json decoder_to_json(const DecoderConfig& c);
DecoderConfig decoder_from_json(const nlohmann::json& j, DecoderConfig base);

}  // namespace hasr
