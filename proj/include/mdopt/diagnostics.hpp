#pragma once

#include <vector>

#include "mdopt/strategies.hpp"

namespace mdopt {

// Analytic quadratic loss L(theta) = 1/2 (theta-c)' A (theta-c) with SPD A,
// so the gradient A(theta-c) and the constant Hessian A are exact. These
// are the oracles the Taylor-identity checks run against.
struct QuadDomain {
  std::vector<double> a;  // dim x dim, row-major, symmetric positive-definite
  std::vector<double> c;

  std::size_t dim() const { return c.size(); }
  double loss(const std::vector<double>& theta) const;
  std::vector<double> grad(const std::vector<double>& theta) const;
};

QuadDomain random_spd_domain(std::size_t dim, Rng& rng);

// Plain-vector helpers shared by the oracle code and its tests.
double vdot(const std::vector<double>& a, const std::vector<double>& b);
double vnorm(const std::vector<double>& a);
std::vector<double> matvec(const std::vector<double>& m,
                           const std::vector<double>& x);
std::vector<double> matmul(const std::vector<double>& a,
                           const std::vector<double>& b, std::size_t dim);

// The literal inner-loop recursion theta_{i+1} = theta_i - alpha *
// grad_i(theta_i), domains visited in list order.
std::vector<double> quad_dn_endpoint(const std::vector<QuadDomain>& domains,
                                     const std::vector<double>& theta0,
                                     double alpha);

// Closed-form endpoint delta -alpha * (sum g_i - alpha * sum_i sum_{j<i}
// H_i g_j) where the g_j are the inner-loop gradients reconstructed by the
// recursion g_i = gbar_i - alpha * H_i * sum_{j<i} g_j, never by stepping
// theta. Exact for quadratics at any n.
std::vector<double> quad_dn_predicted(const std::vector<QuadDomain>& domains,
                                      const std::vector<double>& theta0,
                                      double alpha);

// Same shape but with the initial gradients gbar_j in the cross terms.
// Exact only for n <= 2; at n >= 3 it omits O(alpha^3) chains.
std::vector<double> quad_dn_predicted_first_order(
    const std::vector<QuadDomain>& domains, const std::vector<double>& theta0,
    double alpha);

struct DnResidual {
  double exact_rel = 0.0;        // against quad_dn_predicted
  double first_order_rel = 0.0;  // against quad_dn_predicted_first_order
};

DnResidual dn_taylor_residual(const std::vector<QuadDomain>& domains,
                              const std::vector<double>& theta0, double alpha);

// Max absolute gap between the order-averaged second-order terms
// 1/2 (H_1 g_2 + H_2 g_1) and the analytic 1/2 * grad <g_1, g_2>, the two
// sides computed by different numerical routes.
double innergrad_expectation_check(const QuadDomain& d1, const QuadDomain& d2,
                                   const std::vector<double>& theta0);

// Relative gap between the two-step regularization delta and
// -alpha (g_aux + g_target - alpha * H_target g_aux).
double dr_identity_check(const QuadDomain& d_target, const QuadDomain& d_aux,
                         const std::vector<double>& theta0, double alpha);

struct GradientReport {
  std::vector<ParamVector> grads;  // empty when built from raw vectors
  std::size_t n = 0;
  std::vector<double> inner;   // n x n, row-major
  std::vector<double> cosine;  // n x n; 0 where a zero vector is involved
  double conflict_rate = 0.0;  // fraction of pairs i<j with inner < 0
};

GradientReport report_from_raw(const std::vector<std::vector<double>>& grads);

// One fixed probe minibatch per domain (all domains draw with an identical
// fresh RNG, so equal domains get equal batches), gradients at params,
// pairwise tally.
GradientReport measure_conflict(const ParamVector& params,
                                const MultiDomainDataset& data,
                                std::int64_t batch_seed,
                                std::size_t batch_size);

struct ConflictSeries {
  struct PairRow {
    int epoch;
    int i;
    int j;
    double inner;
    double cosine;
  };
  std::vector<double> mean_cosine;  // one entry per epoch
  std::vector<PairRow> rows;
};

// Trains `epochs` epochs of the given shared-trajectory strategy (or
// mamdr), measuring the mean pairwise gradient cosine on probe batches
// fixed before training.
ConflictSeries track_inner_products(Strategy strategy, const ModelSpec& spec,
                                    const MultiDomainDataset& data,
                                    const TrainConfig& cfg, int epochs,
                                    std::int64_t probe_seed);

// First-order prediction residual of one single-step-per-domain inner pass
// on the neural model, fixed probe batches, Hessian terms via finite
// differences. Shrinks roughly quadratically in alpha.
double dn_taylor_residual_neural(const ParamVector& theta0,
                                 const MultiDomainDataset& data, double alpha,
                                 std::int64_t probe_seed,
                                 std::size_t batch_size, double hvp_eps);

}  // namespace mdopt
