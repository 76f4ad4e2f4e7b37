#include "mdopt/optim.hpp"

#include <cmath>

namespace mdopt {

void sgd_step_(ParamVector& params, const ParamVector& grad, double lr) {
  params.require_same_layout(grad, "sgd_step");
  if (lr <= 0.0) throw ConfigError("sgd_step: lr must be > 0");
  params.axpy_(-lr, grad);
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     double lr) {
  ParamVector out = params;
  sgd_step_(out, grad, lr);
  return out;
}

AdamState::AdamState(LayoutPtr layout, double lr_)
    : lr(lr_), moment1(layout), moment2(std::move(layout)) {}

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad) {
  params.require_same_layout(grad, "adam_step");
  params.require_same_layout(state.moment1, "adam_step");
  ++state.step_count;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  double* p = params.data();
  double* m1 = state.moment1.data();
  double* m2 = state.moment2.data();
  const double* g = grad.values().data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m1[i] = state.beta1 * m1[i] + (1.0 - state.beta1) * g[i];
    m2[i] = state.beta2 * m2[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double mhat = m1[i] / c1;
    const double vhat = m2[i] / c2;
    p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

ParamVector outer_step(const ParamVector& origin, const ParamVector& endpoint,
                       double lr) {
  origin.require_same_layout(endpoint, "outer_step");
  if (lr <= 0.0 || lr > 1.0) throw ConfigError("outer_step: lr must be in (0,1]");
  if (lr == 1.0) return endpoint;
  ParamVector out = origin;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] += lr * (endpoint[i] - origin[i]);
  return out;
}

}  // namespace mdopt
