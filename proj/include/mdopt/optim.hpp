#pragma once

#include "mdopt/model.hpp"

namespace mdopt {

// params - lr * grad.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     double lr);
void sgd_step_(ParamVector& params, const ParamVector& grad, double lr);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  ParamVector moment1;
  ParamVector moment2;

  AdamState() = default;
  AdamState(LayoutPtr layout, double lr_);
};

// Standard bias-corrected Adam; mutates params and state in place.
void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad);

// origin + lr * (endpoint - origin). lr == 1 returns endpoint exactly
// (bitwise), which is what makes the beta=1 alternate-training degeneracy
// hold without roundoff.
ParamVector outer_step(const ParamVector& origin, const ParamVector& endpoint,
                       double lr);

}  // namespace mdopt
