#pragma once

#include "hasr/parameters.h"

namespace hasr {

struct AdadeltaOptions {
  double rho = 0.95;
  double epsilon = 1e-8;
};

// Running averages of squared gradients and squared updates, one buffer per
// parameter.
struct AdadeltaState {
  AdadeltaOptions options;
  GradList sq_grad;
  GradList sq_update;
};

AdadeltaState make_adadelta_state(const ParameterSet& params, AdadeltaOptions options = {});

// One Adadelta update (unit learning rate):
//   E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
//   dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//   x       <- x + dx
void adadelta_step(ParameterSet& params, const GradList& grads, AdadeltaState& state);

}  // namespace hasr
