#include "hasr/parameters.h"

#include <cmath>
#include <numbers>

#include "hasr/errors.h"

namespace hasr {

Tensor ParameterSet::add(std::string name, Tensor tensor) {
  if (find(name)) throw ContractError("duplicate parameter name " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(tensor);
  return tensor;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return &tensors_[i];
  }
  return nullptr;
}

std::size_t ParameterSet::total_values() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.numel();
  return n;
}

GradList zero_grads(const ParameterSet& params) {
  GradList grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads[i].assign(params.tensor(i).numel(), 0.0);
  return grads;
}

void accumulate_grads(const ParameterSet& params, const GradientMap& grads, GradList& into) {
  if (into.size() != params.size()) throw ContractError("gradient list does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Buffer* g = grads.find(params.tensor(i));
    if (!g) continue;
    Buffer& dst = into[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += (*g)[j];
  }
}

double global_norm(const GradList& grads) {
  double sq = 0.0;
  for (const Buffer& g : grads) {
    for (double v : g) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(GradList& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Buffer& g : grads) {
      for (double& v : g) v *= factor;
    }
  }
  return norm;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded to keep the stream simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ContractError("Rng::below(0)");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

void init_uniform(Tensor& t, Rng& rng, double scale) {
  for (double& v : t.mutable_data()) v = rng.uniform(-scale, scale);
}

}  // namespace hasr
