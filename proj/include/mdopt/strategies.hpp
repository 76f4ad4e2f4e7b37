#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mdopt/optim.hpp"
#include "mdopt/sampler.hpp"

namespace mdopt {

enum class Strategy {
  Dn,
  Alternate,
  Mamdr,
  Joint,
  Finetune,
  Weighted,
  Pcgrad,
  Reptile,
  Fomaml,
  Mldg,
};

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

enum class Optimizer { Sgd, Adam };

Optimizer optimizer_from_string(const std::string& s);
std::string to_string(Optimizer o);

struct TrainConfig {
  double alpha = 1e-3;  // inner-loop / plain SGD rate
  double beta = 0.1;    // outer-loop interpolation rate, in (0,1]
  double gamma = 0.1;   // domain-regularization interpolation rate
  int k = 5;            // regularization domains sampled per target
  int epochs = 10;
  std::size_t batch_size = 256;
  int inner_steps_per_domain = 1;
  std::int64_t seed = 0;
  Strategy strategy = Strategy::Mamdr;
  Optimizer optimizer = Optimizer::Sgd;  // joint-style baselines only
  double mldg_beta = 1.0;                // weight of the meta-test term
  bool train_loss_weights = true;        // weighted strategy: update s_i
  // Tolerate domains with no rows (skipped in passes, excluded from
  // sampling); the parameter-server shards need this.
  bool allow_empty_domains = false;

  void validate(std::size_t n_domains) const;
};

// Shared parameters plus one additive specific vector per domain; the
// per-domain inference parameters are always combine(shared, specific[i]).
struct MdrState {
  ParamVector shared;
  std::vector<ParamVector> specific;

  std::size_t n_domains() const { return specific.size(); }
};

// Fresh state: initialized shared model, zero specific vectors, so initial
// per-domain behavior equals the shared model exactly.
MdrState init_mdr_state(const ModelSpec& spec, std::size_t n_domains,
                        std::uint64_t seed);

struct TrainStats {
  long grad_evals = 0;  // loss_and_grad calls made by strategy code
};

// One pass of sequential per-domain SGD in freshly shuffled domain order
// (alternate training); returns the endpoint.
ParamVector alternate_epoch(const ParamVector& shared, const TrainView& view,
                            const TrainConfig& cfg, Rng& rng,
                            TrainStats* stats = nullptr);

// Same inner pass, then interpolate: shared + beta * (endpoint - shared).
ParamVector dn_epoch(const ParamVector& shared, const TrainView& view,
                     const TrainConfig& cfg, Rng& rng,
                     TrainStats* stats = nullptr);

// New specific vector for the target domain: k sampled auxiliary domains,
// one SGD step on each auxiliary then on the target (shared frozen),
// interpolating specific[target] toward each two-step endpoint by gamma.
ParamVector dr_update(const MdrState& state, std::size_t target,
                      const TrainView& view, const TrainConfig& cfg, Rng& rng,
                      TrainStats* stats = nullptr);

// One DN pass on shared, then a DR update for every domain in ascending
// order.
MdrState mamdr_epoch(const MdrState& state, const TrainView& view,
                     const TrainConfig& cfg, Rng& rng,
                     TrainStats* stats = nullptr);

// cfg.epochs MAMDR epochs with the per-epoch RNG protocol.
MdrState mamdr_train(MdrState state, const TrainView& view,
                     const TrainConfig& cfg, TrainStats* stats = nullptr,
                     int worker = 0);

// One shuffled minibatch pass over the union of all domains, domain tags
// ignored. Uses Adam iff cfg.optimizer says so and adam is non-null.
ParamVector joint_epoch(const ParamVector& shared, const TrainView& view,
                        const TrainConfig& cfg, Rng& rng,
                        AdamState* adam = nullptr, TrainStats* stats = nullptr);

// Per domain: copy shared, run cfg.epochs of domain-local minibatch SGD.
std::vector<ParamVector> finetune(const ParamVector& shared,
                                  const TrainView& view, const TrainConfig& cfg,
                                  TrainStats* stats = nullptr);

// Joint pass where sample losses are scaled by exp(-s_domain); s gets its
// exact gradient step when cfg.train_loss_weights. Returns (params, s).
std::pair<ParamVector, std::vector<double>> weighted_loss_epoch(
    const ParamVector& shared, std::vector<double> log_vars,
    const TrainView& view, const TrainConfig& cfg, Rng& rng,
    TrainStats* stats = nullptr);

// Gradient surgery on plain vectors: for each i, visit j != i in random
// order and project g_i off g_j whenever their inner product is negative.
std::vector<std::vector<double>> pcgrad_surgery(
    const std::vector<std::vector<double>>& grads, Rng& rng);

// Per-domain minibatch gradients, surgery, then one SGD step with their
// mean.
ParamVector pcgrad_step(const ParamVector& shared, const TrainView& view,
                        const TrainConfig& cfg, Rng& rng,
                        TrainStats* stats = nullptr);

// Per domain, in shuffled order: inner SGD steps on that domain only, then
// interpolate shared toward the endpoint by beta.
ParamVector reptile_epoch(const ParamVector& shared, const TrainView& view,
                          const TrainConfig& cfg, Rng& rng,
                          TrainStats* stats = nullptr);

// First-order MAML: adapt on a support batch, take the query-batch gradient
// at the adapted point, apply the mean across domains at rate beta.
ParamVector fomaml_epoch(const ParamVector& shared, const TrainView& view,
                         const TrainConfig& cfg, Rng& rng,
                         TrainStats* stats = nullptr);

// Meta-train/meta-test domain split; one first-order step on
// grad_metatrain + mldg_beta * grad_metatest(theta - alpha*grad_metatrain).
ParamVector mldg_epoch(const ParamVector& shared, const TrainView& view,
                       const TrainConfig& cfg, Rng& rng,
                       TrainStats* stats = nullptr);

}  // namespace mdopt
