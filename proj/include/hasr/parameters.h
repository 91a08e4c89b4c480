#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hasr/tape.h"
#include "hasr/tensor.h"

namespace hasr {

// Named tensors in a fixed registration order. The order defines gradient
// layout, optimizer state layout, and checkpoint layout.
class ParameterSet {
 public:
  // Returns a handle aliasing the stored tensor.
  Tensor add(std::string name, Tensor tensor);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor* find(const std::string& name) const;
  std::size_t total_values() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// One gradient buffer per parameter, aligned with a ParameterSet.
using GradList = std::vector<Buffer>;

GradList zero_grads(const ParameterSet& params);
// Adds the gradients a backward pass produced; parameters that were not
// reached contribute nothing.
void accumulate_grads(const ParameterSet& params, const GradientMap& grads, GradList& into);

double global_norm(const GradList& grads);
// Rescales every gradient by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double clip_global_norm(GradList& grads, double max_norm);

// Seeded generator shared by initialization and shuffling. The uniform mapping
// is done by hand so values do not depend on the standard library's
// distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n);  // [0, n)

 private:
  std::mt19937_64 engine_;
};

// Fills with uniform values in [-scale, scale].
void init_uniform(Tensor& t, Rng& rng, double scale);

}  // namespace hasr
