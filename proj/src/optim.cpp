#include "hasr/optim.h"

#include <cmath>

#include "hasr/errors.h"

namespace hasr {

AdadeltaState make_adadelta_state(const ParameterSet& params, AdadeltaOptions options) {
  if (!(options.rho > 0.0 && options.rho < 1.0)) throw ConfigError("adadelta rho must be in (0,1)");
  if (!(options.epsilon > 0.0)) throw ConfigError("adadelta epsilon must be positive");
  return AdadeltaState{options, zero_grads(params), zero_grads(params)};
}

void adadelta_step(ParameterSet& params, const GradList& grads, AdadeltaState& state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.sq_grad.size() != n || state.sq_update.size() != n) {
    throw ContractError("adadelta_step: state does not match the parameter set");
  }
  const double rho = state.options.rho;
  const double eps = state.options.epsilon;
  for (std::size_t p = 0; p < n; ++p) {
    auto x = params.tensor(p).mutable_data();
    const Buffer& g = grads[p];
    Buffer& eg = state.sq_grad[p];
    Buffer& ed = state.sq_update[p];
    if (g.size() != x.size() || eg.size() != x.size() || ed.size() != x.size()) {
      throw ContractError("adadelta_step: shape mismatch for parameter " + params.name(p));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
      const double dx = -std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
      ed[i] = rho * ed[i] + (1.0 - rho) * dx * dx;
      x[i] += dx;
    }
  }
}

}  // namespace hasr
