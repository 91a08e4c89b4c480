#pragma once

#include <string>
#include <vector>

#include "hasr/hybrid.h"
#include "hasr/model.h"
#include "hasr/tokenizer.h"
#include "support/random.h"

namespace hasr::testing {

// Units A, B, C, _ : K = 4.
inline UnitTable tiny_units() { return UnitTable(learn_bpe({{"ABC", 1}}, 0, "ABC")); }

inline ModelConfig tiny_model_config(std::size_t input_dim = 3, std::uint64_t seed = 1,
                                     bool batch_norm = true) {
  ModelConfig c;
  c.encoder.input_dim = input_dim;
  c.encoder.num_layers = 2;
  c.encoder.cells = 3;
  c.encoder.subsample_layers = {2};
  c.encoder.batch_norm = batch_norm;
  c.decoder.embed_dim = 3;
  c.decoder.state_dim = 3;
  c.decoder.att_dim = 3;
  c.decoder.num_filters = 2;
  c.decoder.filter_width = 3;
  c.init_scale = 0.5;
  c.seed = seed;
  return c;
}

inline Example random_example(Rng& rng, const UnitTable& units, std::string id, std::size_t frames,
                              std::size_t dim, std::vector<LabelId> labels) {
  Example ex;
  ex.id = std::move(id);
  ex.features = random_tensor({frames, dim}, rng, -1.0, 1.0, false);
  ex.labels = std::move(labels);
  std::vector<std::string> names;
  for (LabelId l : ex.labels) names.push_back(units.unit(l));
  ex.transcript = detokenize(names).text();
  return ex;
}

}  // namespace hasr::testing
