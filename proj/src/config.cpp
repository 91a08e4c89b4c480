#include "hasr/config.h"

#include <fstream>
#include <initializer_list>
#include <set>

#include "hasr/errors.h"

namespace hasr {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  require_object(j, where);
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) {
      throw ConfigError("unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& into, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <typename T>
void read_unsigned(const json& j, const char* key, T& into, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  into = v.get<T>();
}

OovPolicy parse_oov(const std::string& s) {
  if (s == "reject") return OovPolicy::kReject;
  if (s == "skip") return OovPolicy::kSkip;
  throw ConfigError("tokenizer.oov_policy must be \"reject\" or \"skip\", got \"" + s + "\"");
}

}  // namespace

json encoder_to_json(const EncoderConfig& c) {
  return json{{"input_dim", c.input_dim},
              {"num_layers", c.num_layers},
              {"cells", c.cells},
              {"subsample_layers", c.subsample_layers},
              {"subsample_factor", c.subsample_factor},
              {"batch_norm", c.batch_norm},
              {"bn_momentum", c.bn_momentum},
              {"bn_eps", c.bn_eps}};
}

EncoderConfig encoder_from_json(const json& j, EncoderConfig c) {
  const std::string where = "encoder";
  reject_unknown(j, where,
                 {"input_dim", "num_layers", "cells", "subsample_layers", "subsample_factor",
                  "batch_norm", "bn_momentum", "bn_eps"});
  read_unsigned(j, "input_dim", c.input_dim, where);
  read_unsigned(j, "num_layers", c.num_layers, where);
  read_unsigned(j, "cells", c.cells, where);
  read(j, "subsample_layers", c.subsample_layers, where);
  read_unsigned(j, "subsample_factor", c.subsample_factor, where);
  read(j, "batch_norm", c.batch_norm, where);
  read(j, "bn_momentum", c.bn_momentum, where);
  read(j, "bn_eps", c.bn_eps, where);
  return c;
}

json decoder_to_json(const DecoderConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"state_dim", c.state_dim},
              {"att_dim", c.att_dim},
              {"num_filters", c.num_filters},
              {"filter_width", c.filter_width}};
}

DecoderConfig decoder_from_json(const json& j, DecoderConfig c) {
  const std::string where = "decoder";
  reject_unknown(j, where, {"embed_dim", "state_dim", "att_dim", "num_filters", "filter_width"});
  read_unsigned(j, "embed_dim", c.embed_dim, where);
  read_unsigned(j, "state_dim", c.state_dim, where);
  read_unsigned(j, "att_dim", c.att_dim, where);
  read_unsigned(j, "num_filters", c.num_filters, where);
  read_unsigned(j, "filter_width", c.filter_width, where);
  return c;
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.encoder = encoder;
  m.decoder = decoder;
  m.seed = hybrid.seed;
  return m;
}

void RunConfig::validate() const {
  if (version != kConfigVersion) {
    throw ConfigError("config version " + std::to_string(version) + " is not supported");
  }
  if (features.num_mel == 0) throw ConfigError("features.num_mel must be positive");
  if (encoder.input_dim != features.num_mel) {
    throw ConfigError("encoder.input_dim (" + std::to_string(encoder.input_dim) +
                      ") must equal features.num_mel (" + std::to_string(features.num_mel) + ")");
  }
  if (tokenizer.alphabet.empty()) throw ConfigError("tokenizer.alphabet must not be empty");
  encoder.validate();
  decoder.validate();
  hybrid.validate();
  decode.validate();
}

RunConfig config_from_json(const json& doc) {
  reject_unknown(doc, "config",
                 {"version", "profile", "tokenizer", "features", "encoder", "decoder", "hybrid",
                  "decode", "paths"});
  RunConfig c;
  read(doc, "version", c.version, "config");
  read(doc, "profile", c.profile, "config");
  if (c.profile == "large") {
    c.encoder = EncoderConfig::large();
    c.decoder = DecoderConfig::large();
  } else if (c.profile != "desk") {
    throw ConfigError("profile must be \"desk\" or \"large\", got \"" + c.profile + "\"");
  }

  if (doc.contains("tokenizer")) {
    const json& t = doc.at("tokenizer");
    reject_unknown(t, "tokenizer", {"num_merges", "alphabet", "oov_policy"});
    read_unsigned(t, "num_merges", c.tokenizer.num_merges, "tokenizer");
    read(t, "alphabet", c.tokenizer.alphabet, "tokenizer");
    std::string oov = c.tokenizer.oov_policy == OovPolicy::kSkip ? "skip" : "reject";
    read(t, "oov_policy", oov, "tokenizer");
    c.tokenizer.oov_policy = parse_oov(oov);
  }
  if (doc.contains("features")) {
    const json& f = doc.at("features");
    reject_unknown(f, "features", {"num_mel", "cmvn"});
    read_unsigned(f, "num_mel", c.features.num_mel, "features");
    read(f, "cmvn", c.features.cmvn, "features");
  }
  c.encoder.input_dim = c.features.num_mel;
  if (doc.contains("encoder")) c.encoder = encoder_from_json(doc.at("encoder"), c.encoder);
  if (doc.contains("decoder")) c.decoder = decoder_from_json(doc.at("decoder"), c.decoder);
  if (doc.contains("hybrid")) {
    const json& h = doc.at("hybrid");
    const std::string where = "hybrid";
    reject_unknown(h, where,
                   {"lambda", "epochs", "batch_size", "seed", "clip_norm", "rho", "epsilon",
                    "early_stop_wer"});
    read(h, "lambda", c.hybrid.lambda, where);
    read_unsigned(h, "epochs", c.hybrid.epochs, where);
    read_unsigned(h, "batch_size", c.hybrid.batch_size, where);
    read_unsigned(h, "seed", c.hybrid.seed, where);
    read(h, "clip_norm", c.hybrid.clip_norm, where);
    read(h, "rho", c.hybrid.adadelta.rho, where);
    read(h, "epsilon", c.hybrid.adadelta.epsilon, where);
    read(h, "early_stop_wer", c.hybrid.early_stop_wer, where);
  }
  if (doc.contains("decode")) {
    const json& d = doc.at("decode");
    reject_unknown(d, "decode", {"beam", "max_len", "length_penalty"});
    read_unsigned(d, "beam", c.decode.beam, "decode");
    read_unsigned(d, "max_len", c.decode.max_len, "decode");
    read(d, "length_penalty", c.decode.length_penalty, "decode");
  }
  if (doc.contains("paths")) {
    const json& p = doc.at("paths");
    reject_unknown(p, "paths", {"units", "merges"});
    read(p, "units", c.paths.units, "paths");
    read(p, "merges", c.paths.merges, "paths");
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  return json{
      {"version", c.version},
      {"profile", c.profile},
      {"tokenizer",
       {{"num_merges", c.tokenizer.num_merges},
        {"alphabet", c.tokenizer.alphabet},
        {"oov_policy", c.tokenizer.oov_policy == OovPolicy::kSkip ? "skip" : "reject"}}},
      {"features", {{"num_mel", c.features.num_mel}, {"cmvn", c.features.cmvn}}},
      {"encoder", encoder_to_json(c.encoder)},
      {"decoder", decoder_to_json(c.decoder)},
      {"hybrid",
       {{"lambda", c.hybrid.lambda},
        {"epochs", c.hybrid.epochs},
        {"batch_size", c.hybrid.batch_size},
        {"seed", c.hybrid.seed},
        {"clip_norm", c.hybrid.clip_norm},
        {"rho", c.hybrid.adadelta.rho},
        {"epsilon", c.hybrid.adadelta.epsilon},
        {"early_stop_wer", c.hybrid.early_stop_wer}}},
      {"decode",
       {{"beam", c.decode.beam},
        {"max_len", c.decode.max_len},
        {"length_penalty", c.decode.length_penalty}}},
      {"paths", {{"units", c.paths.units}, {"merges", c.paths.merges}}}};
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace hasr
