#include "mdopt/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>

namespace mdopt {

Strategy strategy_from_string(const std::string& s) {
  if (s == "dn") return Strategy::Dn;
  if (s == "alternate") return Strategy::Alternate;
  if (s == "mamdr") return Strategy::Mamdr;
  if (s == "joint") return Strategy::Joint;
  if (s == "finetune") return Strategy::Finetune;
  if (s == "weighted") return Strategy::Weighted;
  if (s == "pcgrad") return Strategy::Pcgrad;
  if (s == "reptile") return Strategy::Reptile;
  if (s == "fomaml") return Strategy::Fomaml;
  if (s == "mldg") return Strategy::Mldg;
  throw ConfigError("unknown strategy: " + s);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Dn: return "dn";
    case Strategy::Alternate: return "alternate";
    case Strategy::Mamdr: return "mamdr";
    case Strategy::Joint: return "joint";
    case Strategy::Finetune: return "finetune";
    case Strategy::Weighted: return "weighted";
    case Strategy::Pcgrad: return "pcgrad";
    case Strategy::Reptile: return "reptile";
    case Strategy::Fomaml: return "fomaml";
    default: return "mldg";
  }
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adam") return Optimizer::Adam;
  throw ConfigError("unknown optimizer: " + s);
}

std::string to_string(Optimizer o) {
  return o == Optimizer::Sgd ? "sgd" : "adam";
}

void TrainConfig::validate(std::size_t n_domains) const {
  if (n_domains == 0) throw ConfigError("train: dataset has no domains");
  if (!(alpha > 0.0)) throw ConfigError("train: alpha must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("train: gamma must be > 0");
  if (!(beta > 0.0) || beta > 1.0)
    throw ConfigError("train: beta must be in (0,1]");
  if (k < 1) throw ConfigError("train: k must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (inner_steps_per_domain < 1)
    throw ConfigError("train: inner_steps_per_domain must be >= 1");
  if (mldg_beta < 0.0) throw ConfigError("train: mldg_beta must be >= 0");
}

MdrState init_mdr_state(const ModelSpec& spec, std::size_t n_domains,
                        std::uint64_t seed) {
  MdrState state;
  state.shared = init_params(spec, seed);
  state.specific.assign(n_domains, state.shared.zeros_like());
  return state;
}

namespace {

// Domains with rows in this view's split. With allow_empty_domains unset,
// an empty domain is an error rather than a silent skip.
std::vector<std::size_t> active_domains(const TrainView& view,
                                        const TrainConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < view.n_domains(); ++d) {
    if (view.rows(d) > 0) {
      out.push_back(d);
    } else if (!cfg.allow_empty_domains) {
      throw DataError("train: domain " + std::to_string(d) + " has no " +
                      to_string(view.split()) + " rows");
    }
  }
  if (out.empty()) throw DataError("train: no domain has any rows");
  return out;
}

LossGrad domain_grad(const ParamVector& params, const Batch& batch,
                     std::size_t domain, TrainStats* stats) {
  try {
    if (stats) ++stats->grad_evals;
    return loss_and_grad(params, batch);
  } catch (const DivergenceError&) {
    throw DivergenceError("training diverged", static_cast<int>(domain));
  }
}

ParamVector sequential_pass(const ParamVector& shared, const TrainView& view,
                            const TrainConfig& cfg, Rng& rng,
                            TrainStats* stats) {
  cfg.validate(view.n_domains());
  auto order = active_domains(view, cfg);
  std::shuffle(order.begin(), order.end(), rng);
  ParamVector theta = shared;
  for (auto d : order) {
    for (int step = 0; step < cfg.inner_steps_per_domain; ++step) {
      const Batch batch = view.sample_batch(d, cfg.batch_size, rng);
      const auto lg = domain_grad(theta, batch, d, stats);
      sgd_step_(theta, lg.grad, cfg.alpha);
    }
  }
  return theta;
}

}  // namespace

ParamVector alternate_epoch(const ParamVector& shared, const TrainView& view,
                            const TrainConfig& cfg, Rng& rng,
                            TrainStats* stats) {
  return sequential_pass(shared, view, cfg, rng, stats);
}

ParamVector dn_epoch(const ParamVector& shared, const TrainView& view,
                     const TrainConfig& cfg, Rng& rng, TrainStats* stats) {
  const ParamVector endpoint = sequential_pass(shared, view, cfg, rng, stats);
  return outer_step(shared, endpoint, cfg.beta);
}

ParamVector dr_update(const MdrState& state, std::size_t target,
                      const TrainView& view, const TrainConfig& cfg, Rng& rng,
                      TrainStats* stats) {
  cfg.validate(view.n_domains());
  if (target >= state.n_domains())
    throw IndexError("dr: target domain out of range");
  const auto active = active_domains(view, cfg);
  std::vector<std::size_t> others;
  for (auto d : active)
    if (d != target) others.push_back(d);
  if (view.rows(target) == 0 || others.empty()) {
    if (cfg.allow_empty_domains) return state.specific[target];
    throw ConfigError("dr: needs the target and at least one other domain");
  }
  std::size_t k = static_cast<std::size_t>(cfg.k);
  if (k > others.size()) {
    if (!cfg.allow_empty_domains)
      throw ConfigError("dr: k exceeds the number of other domains");
    k = others.size();
  }
  // std::sample keeps ascending order, which fixes the optimization
  // sequence over the sampled set.
  std::vector<std::size_t> sampled;
  std::sample(others.begin(), others.end(), std::back_inserter(sampled),
              k, rng);

  ParamVector theta_i = state.specific[target];
  for (auto j : sampled) {
    ParamVector tilde = theta_i;
    const Batch batch_j = view.sample_batch(j, cfg.batch_size, rng);
    // Loss sees shared + tilde; shared is frozen, so the full gradient
    // lands on tilde unchanged.
    auto lg = domain_grad(combine(state.shared, tilde), batch_j, j, stats);
    sgd_step_(tilde, lg.grad, cfg.alpha);
    const Batch batch_i = view.sample_batch(target, cfg.batch_size, rng);
    lg = domain_grad(combine(state.shared, tilde), batch_i, target, stats);
    sgd_step_(tilde, lg.grad, cfg.alpha);
    theta_i = outer_step(theta_i, tilde, cfg.gamma);
  }
  return theta_i;
}

MdrState mamdr_epoch(const MdrState& state, const TrainView& view,
                     const TrainConfig& cfg, Rng& rng, TrainStats* stats) {
  if (state.n_domains() != view.n_domains())
    throw LayoutError("mamdr: state and dataset domain counts differ");
  MdrState out = state;
  out.shared = dn_epoch(state.shared, view, cfg, rng, stats);
  MdrState mid;
  mid.shared = out.shared;
  mid.specific = state.specific;
  for (std::size_t i = 0; i < state.n_domains(); ++i) {
    if (cfg.allow_empty_domains && view.rows(i) == 0) continue;
    out.specific[i] = dr_update(mid, i, view, cfg, rng, stats);
  }
  return out;
}

MdrState mamdr_train(MdrState state, const TrainView& view,
                     const TrainConfig& cfg, TrainStats* stats, int worker) {
  cfg.validate(view.n_domains());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = epoch_rng(static_cast<std::uint64_t>(cfg.seed), epoch, worker);
    state = mamdr_epoch(state, view, cfg, rng, stats);
  }
  return state;
}

ParamVector joint_epoch(const ParamVector& shared, const TrainView& view,
                        const TrainConfig& cfg, Rng& rng, AdamState* adam,
                        TrainStats* stats) {
  cfg.validate(view.n_domains());
  ParamVector theta = shared;
  for (const auto& tb : view.union_epoch_batches(cfg.batch_size, rng)) {
    if (stats) ++stats->grad_evals;
    const auto lg = loss_and_grad(theta, tb.batch);
    if (adam != nullptr && cfg.optimizer == Optimizer::Adam)
      adam_step(*adam, theta, lg.grad);
    else
      sgd_step_(theta, lg.grad, cfg.alpha);
  }
  return theta;
}

std::vector<ParamVector> finetune(const ParamVector& shared,
                                  const TrainView& view, const TrainConfig& cfg,
                                  TrainStats* stats) {
  cfg.validate(view.n_domains());
  std::vector<ParamVector> out;
  out.reserve(view.n_domains());
  for (std::size_t d = 0; d < view.n_domains(); ++d) {
    ParamVector theta = shared;
    if (view.rows(d) == 0) {
      if (!cfg.allow_empty_domains)
        throw DataError("finetune: domain " + std::to_string(d) +
                        " has no rows");
      out.push_back(std::move(theta));
      continue;
    }
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng rng(mix_seed(static_cast<std::uint64_t>(cfg.seed),
                       0x10000u + static_cast<std::uint64_t>(epoch), d));
      for (const auto& batch : view.domain_epoch_batches(d, cfg.batch_size, rng)) {
        const auto lg = domain_grad(theta, batch, d, stats);
        sgd_step_(theta, lg.grad, cfg.alpha);
      }
    }
    out.push_back(std::move(theta));
  }
  return out;
}

std::pair<ParamVector, std::vector<double>> weighted_loss_epoch(
    const ParamVector& shared, std::vector<double> log_vars,
    const TrainView& view, const TrainConfig& cfg, Rng& rng,
    TrainStats* stats) {
  cfg.validate(view.n_domains());
  if (log_vars.size() != view.n_domains())
    throw ConfigError("weighted: one log-variance per domain expected");
  ParamVector theta = shared;
  std::vector<double> weights;
  std::vector<double> s_grad(log_vars.size());
  for (const auto& tb : view.union_epoch_batches(cfg.batch_size, rng)) {
    const auto b = tb.batch.size();
    weights.resize(b);
    for (std::size_t i = 0; i < b; ++i)
      weights[i] = std::exp(-log_vars[tb.domains[i]]);
    if (stats) ++stats->grad_evals;
    const auto lg = loss_and_grad(theta, tb.batch, weights);

    if (cfg.train_loss_weights) {
      // Batch objective per sample: exp(-s_d) * bce + s_d, so
      // d/ds_d = (sum over the domain's samples of (1 - exp(-s_d)*bce)) / B.
      std::fill(s_grad.begin(), s_grad.end(), 0.0);
      const auto logits = forward_logits(theta, tb.batch);
      for (std::size_t i = 0; i < b; ++i) {
        const double bce = bce_from_logit(logits[i], tb.batch.labels[i]);
        s_grad[tb.domains[i]] += 1.0 - weights[i] * bce;
      }
      sgd_step_(theta, lg.grad, cfg.alpha);
      for (std::size_t d = 0; d < log_vars.size(); ++d)
        log_vars[d] -= cfg.alpha * s_grad[d] / static_cast<double>(b);
    } else {
      sgd_step_(theta, lg.grad, cfg.alpha);
    }
  }
  return {std::move(theta), std::move(log_vars)};
}

std::vector<std::vector<double>> pcgrad_surgery(
    const std::vector<std::vector<double>>& grads, Rng& rng) {
  if (grads.size() < 2) throw ConfigError("pcgrad: needs at least 2 gradients");
  const std::size_t dim = grads[0].size();
  for (const auto& g : grads)
    if (g.size() != dim) throw LayoutError("pcgrad: gradient sizes differ");
  std::vector<double> sq_norm(grads.size());
  for (std::size_t j = 0; j < grads.size(); ++j) {
    double s = 0.0;
    for (double v : grads[j]) s += v * v;
    sq_norm[j] = s;
  }
  auto out = grads;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    order.clear();
    for (std::size_t j = 0; j < grads.size(); ++j)
      if (j != i) order.push_back(j);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto j : order) {
      if (sq_norm[j] == 0.0) continue;
      double inner = 0.0;
      for (std::size_t t = 0; t < dim; ++t) inner += out[i][t] * grads[j][t];
      if (inner >= 0.0) continue;
      const double coef = inner / sq_norm[j];
      for (std::size_t t = 0; t < dim; ++t) out[i][t] -= coef * grads[j][t];
    }
  }
  return out;
}

ParamVector pcgrad_step(const ParamVector& shared, const TrainView& view,
                        const TrainConfig& cfg, Rng& rng, TrainStats* stats) {
  cfg.validate(view.n_domains());
  const auto active = active_domains(view, cfg);
  if (active.size() < 2) throw ConfigError("pcgrad: needs at least 2 domains");
  std::vector<std::vector<double>> raw;
  raw.reserve(active.size());
  for (auto d : active) {
    const Batch batch = view.sample_batch(d, cfg.batch_size, rng);
    raw.push_back(domain_grad(shared, batch, d, stats).grad.values());
  }
  const auto projected = pcgrad_surgery(raw, rng);
  ParamVector mean = shared.zeros_like();
  for (const auto& g : projected)
    for (std::size_t t = 0; t < g.size(); ++t) mean.data()[t] += g[t];
  mean.scale_(1.0 / static_cast<double>(projected.size()));
  return sgd_step(shared, mean, cfg.alpha);
}

ParamVector reptile_epoch(const ParamVector& shared, const TrainView& view,
                          const TrainConfig& cfg, Rng& rng, TrainStats* stats) {
  cfg.validate(view.n_domains());
  auto order = active_domains(view, cfg);
  std::shuffle(order.begin(), order.end(), rng);
  ParamVector theta = shared;
  for (auto d : order) {
    ParamVector inner = theta;
    for (int step = 0; step < cfg.inner_steps_per_domain; ++step) {
      const Batch batch = view.sample_batch(d, cfg.batch_size, rng);
      const auto lg = domain_grad(inner, batch, d, stats);
      sgd_step_(inner, lg.grad, cfg.alpha);
    }
    theta = outer_step(theta, inner, cfg.beta);
  }
  return theta;
}

ParamVector fomaml_epoch(const ParamVector& shared, const TrainView& view,
                         const TrainConfig& cfg, Rng& rng, TrainStats* stats) {
  cfg.validate(view.n_domains());
  const auto active = active_domains(view, cfg);
  ParamVector acc = shared.zeros_like();
  for (auto d : active) {
    if (view.rows(d) < 2)
      throw DataError("fomaml: domain " + std::to_string(d) +
                      " needs at least 2 rows for support/query");
    ParamVector adapted = shared;
    for (int step = 0; step < cfg.inner_steps_per_domain; ++step) {
      const Batch support = view.sample_batch(d, cfg.batch_size, rng);
      const auto lg = domain_grad(adapted, support, d, stats);
      sgd_step_(adapted, lg.grad, cfg.alpha);
    }
    const Batch query = view.sample_batch(d, cfg.batch_size, rng);
    acc.add_(domain_grad(adapted, query, d, stats).grad);
  }
  acc.scale_(1.0 / static_cast<double>(active.size()));
  return sgd_step(shared, acc, cfg.beta);
}

ParamVector mldg_epoch(const ParamVector& shared, const TrainView& view,
                       const TrainConfig& cfg, Rng& rng, TrainStats* stats) {
  cfg.validate(view.n_domains());
  auto order = active_domains(view, cfg);
  if (order.size() < 2) throw ConfigError("mldg: needs at least 2 domains");
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = (order.size() + 2) / 3;  // ceil(n/3)
  const std::vector<std::size_t> meta_test(order.begin(),
                                           order.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<std::size_t> meta_train(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                                            order.end());

  ParamVector g_train = shared.zeros_like();
  for (auto d : meta_train) {
    const Batch batch = view.sample_batch(d, cfg.batch_size, rng);
    g_train.add_(domain_grad(shared, batch, d, stats).grad);
  }
  g_train.scale_(1.0 / static_cast<double>(meta_train.size()));

  const ParamVector adapted = sgd_step(shared, g_train, cfg.alpha);
  ParamVector g_test = shared.zeros_like();
  for (auto d : meta_test) {
    const Batch batch = view.sample_batch(d, cfg.batch_size, rng);
    g_test.add_(domain_grad(adapted, batch, d, stats).grad);
  }
  g_test.scale_(1.0 / static_cast<double>(meta_test.size()));

  ParamVector update = g_train;
  update.axpy_(cfg.mldg_beta, g_test);
  return sgd_step(shared, update, cfg.alpha);
}

}  // namespace mdopt
