#include "mdopt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mdopt {

double QuadDomain::loss(const std::vector<double>& theta) const {
  const auto d = grad(theta);  // A (theta - c)
  double acc = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) acc += (theta[i] - c[i]) * d[i];
  return 0.5 * acc;
}

std::vector<double> QuadDomain::grad(const std::vector<double>& theta) const {
  const std::size_t n = dim();
  if (theta.size() != n) throw LayoutError("quad: dimension mismatch");
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) acc += a[r * n + s] * (theta[s] - c[s]);
    out[r] = acc;
  }
  return out;
}

QuadDomain random_spd_domain(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> b(dim * dim);
  for (auto& v : b) v = dist(rng) / std::sqrt(static_cast<double>(dim));
  QuadDomain q;
  q.a.assign(dim * dim, 0.0);
  // A = B'B + 0.1 I: symmetric, eigenvalues >= 0.1.
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t s = 0; s < dim; ++s) {
      double acc = 0.0;
      for (std::size_t t = 0; t < dim; ++t) acc += b[t * dim + r] * b[t * dim + s];
      q.a[r * dim + s] = acc + (r == s ? 0.1 : 0.0);
    }
  q.c.resize(dim);
  for (auto& v : q.c) v = dist(rng);
  return q;
}

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw LayoutError("vdot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vnorm(const std::vector<double>& a) { return std::sqrt(vdot(a, a)); }

std::vector<double> matvec(const std::vector<double>& m,
                           const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (m.size() != n * n) throw LayoutError("matvec: size mismatch");
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) acc += m[r * n + s] * x[s];
    out[r] = acc;
  }
  return out;
}

std::vector<double> matmul(const std::vector<double>& a,
                           const std::vector<double>& b, std::size_t dim) {
  if (a.size() != dim * dim || b.size() != dim * dim)
    throw LayoutError("matmul: size mismatch");
  std::vector<double> out(dim * dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t t = 0; t < dim; ++t) {
      const double art = a[r * dim + t];
      if (art == 0.0) continue;
      for (std::size_t s = 0; s < dim; ++s)
        out[r * dim + s] += art * b[t * dim + s];
    }
  return out;
}

namespace {

std::vector<double> vsub(const std::vector<double>& a,
                         const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

void check_domains(const std::vector<QuadDomain>& domains,
                   const std::vector<double>& theta0) {
  if (domains.empty()) throw ConfigError("quad oracle: no domains");
  for (const auto& d : domains)
    if (d.dim() != theta0.size())
      throw LayoutError("quad oracle: dimension mismatch");
}

}  // namespace

std::vector<double> quad_dn_endpoint(const std::vector<QuadDomain>& domains,
                                     const std::vector<double>& theta0,
                                     double alpha) {
  check_domains(domains, theta0);
  std::vector<double> theta = theta0;
  for (const auto& d : domains) {
    const auto g = d.grad(theta);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= alpha * g[i];
  }
  return theta;
}

std::vector<double> quad_dn_predicted(const std::vector<QuadDomain>& domains,
                                      const std::vector<double>& theta0,
                                      double alpha) {
  check_domains(domains, theta0);
  // s accumulates the reconstructed inner gradients; theta never moves.
  std::vector<double> s(theta0.size(), 0.0);
  for (const auto& d : domains) {
    auto gi = d.grad(theta0);              // gbar_i
    const auto correction = matvec(d.a, s);  // H_i * sum_{j<i} g_j
    for (std::size_t t = 0; t < gi.size(); ++t) gi[t] -= alpha * correction[t];
    for (std::size_t t = 0; t < s.size(); ++t) s[t] += gi[t];
  }
  std::vector<double> pred(theta0.size());
  for (std::size_t t = 0; t < s.size(); ++t) pred[t] = theta0[t] - alpha * s[t];
  return pred;
}

std::vector<double> quad_dn_predicted_first_order(
    const std::vector<QuadDomain>& domains, const std::vector<double>& theta0,
    double alpha) {
  check_domains(domains, theta0);
  const std::size_t n = theta0.size();
  std::vector<std::vector<double>> gbar;
  gbar.reserve(domains.size());
  for (const auto& d : domains) gbar.push_back(d.grad(theta0));
  std::vector<double> sum_g(n, 0.0), cross(n, 0.0);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t t = 0; t < n; ++t) sum_g[t] += gbar[i][t];
    for (std::size_t j = 0; j < i; ++j) {
      const auto hg = matvec(domains[i].a, gbar[j]);
      for (std::size_t t = 0; t < n; ++t) cross[t] += hg[t];
    }
  }
  std::vector<double> pred(n);
  for (std::size_t t = 0; t < n; ++t)
    pred[t] = theta0[t] - alpha * (sum_g[t] - alpha * cross[t]);
  return pred;
}

DnResidual dn_taylor_residual(const std::vector<QuadDomain>& domains,
                              const std::vector<double>& theta0, double alpha) {
  const auto actual = quad_dn_endpoint(domains, theta0, alpha);
  const auto delta = vsub(actual, theta0);
  const double scale = vnorm(delta);
  if (scale == 0.0) throw EvalError("dn residual: zero actual delta");
  DnResidual out;
  out.exact_rel =
      vnorm(vsub(actual, quad_dn_predicted(domains, theta0, alpha))) / scale;
  out.first_order_rel =
      vnorm(vsub(actual, quad_dn_predicted_first_order(domains, theta0, alpha))) /
      scale;
  return out;
}

double innergrad_expectation_check(const QuadDomain& d1, const QuadDomain& d2,
                                   const std::vector<double>& theta0) {
  check_domains({d1, d2}, theta0);
  const auto g1 = d1.grad(theta0);
  const auto g2 = d2.grad(theta0);
  // Left: matvec route, 1/2 (H_1 g_2 + H_2 g_1).
  const auto h1g2 = matvec(d1.a, g2);
  const auto h2g1 = matvec(d2.a, g1);
  // Right: 1/2 grad <g_1, g_2> expanded analytically through the product
  // matrix P = A_1 A_2: grad = P (theta - c_2) + P' (theta - c_1).
  const std::size_t n = theta0.size();
  const auto p = matmul(d1.a, d2.a, n);
  std::vector<double> pt(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t s = 0; s < n; ++s) pt[r * n + s] = p[s * n + r];
  const auto r1 = matvec(p, vsub(theta0, d2.c));
  const auto r2 = matvec(pt, vsub(theta0, d1.c));
  double max_gap = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double left = 0.5 * (h1g2[t] + h2g1[t]);
    const double right = 0.5 * (r1[t] + r2[t]);
    max_gap = std::max(max_gap, std::abs(left - right));
  }
  return max_gap;
}

double dr_identity_check(const QuadDomain& d_target, const QuadDomain& d_aux,
                         const std::vector<double>& theta0, double alpha) {
  check_domains({d_target, d_aux}, theta0);
  const std::size_t n = theta0.size();
  // Actual: step on the auxiliary domain, then on the target.
  std::vector<double> theta = theta0;
  auto g = d_aux.grad(theta);
  for (std::size_t t = 0; t < n; ++t) theta[t] -= alpha * g[t];
  g = d_target.grad(theta);
  for (std::size_t t = 0; t < n; ++t) theta[t] -= alpha * g[t];
  const auto actual = vsub(theta, theta0);
  // Predicted: -alpha (gbar_aux + gbar_target - alpha H_target gbar_aux).
  const auto gj = d_aux.grad(theta0);
  const auto gi = d_target.grad(theta0);
  const auto hgj = matvec(d_target.a, gj);
  std::vector<double> pred(n);
  for (std::size_t t = 0; t < n; ++t)
    pred[t] = -alpha * (gj[t] + gi[t] - alpha * hgj[t]);
  const double scale = vnorm(actual);
  if (scale == 0.0) throw EvalError("dr identity: zero actual delta");
  return vnorm(vsub(actual, pred)) / scale;
}

GradientReport report_from_raw(const std::vector<std::vector<double>>& grads) {
  if (grads.size() < 2) throw ConfigError("conflict report: needs >= 2 gradients");
  const std::size_t n = grads.size();
  const std::size_t dim = grads[0].size();
  for (const auto& g : grads)
    if (g.size() != dim) throw LayoutError("conflict report: sizes differ");
  GradientReport report;
  report.n = n;
  report.inner.assign(n * n, 0.0);
  report.cosine.assign(n * n, 0.0);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = vnorm(grads[i]);
  std::size_t conflicts = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double inner = vdot(grads[i], grads[j]);
      report.inner[i * n + j] = inner;
      report.cosine[i * n + j] =
          (norms[i] == 0.0 || norms[j] == 0.0) ? 0.0 : inner / (norms[i] * norms[j]);
      if (i < j) {
        ++pairs;
        conflicts += inner < 0.0;
      }
    }
  report.conflict_rate =
      static_cast<double>(conflicts) / static_cast<double>(pairs);
  return report;
}

namespace {

// One probe batch per domain; every domain draws with an identical fresh
// generator so equal domains produce equal batches.
std::vector<Batch> probe_batches(const MultiDomainDataset& data,
                                 std::int64_t probe_seed,
                                 std::size_t batch_size) {
  TrainView view(data, Split::Train);
  std::vector<Batch> out;
  out.reserve(view.n_domains());
  for (std::size_t d = 0; d < view.n_domains(); ++d) {
    Rng rng(mix_seed(static_cast<std::uint64_t>(probe_seed), 505));
    out.push_back(view.sample_batch(d, batch_size, rng));
  }
  return out;
}

std::vector<ParamVector> probe_grads(const ParamVector& params,
                                     const std::vector<Batch>& batches) {
  std::vector<ParamVector> grads;
  grads.reserve(batches.size());
  for (const auto& b : batches) grads.push_back(loss_and_grad(params, b).grad);
  return grads;
}

GradientReport report_from_params(const ParamVector& params,
                                  const std::vector<Batch>& batches) {
  auto grads = probe_grads(params, batches);
  std::vector<std::vector<double>> raw;
  raw.reserve(grads.size());
  for (const auto& g : grads) raw.push_back(g.values());
  GradientReport report = report_from_raw(raw);
  report.grads = std::move(grads);
  return report;
}

}  // namespace

GradientReport measure_conflict(const ParamVector& params,
                                const MultiDomainDataset& data,
                                std::int64_t batch_seed,
                                std::size_t batch_size) {
  if (data.domains.size() < 2)
    throw ConfigError("measure_conflict: needs >= 2 domains");
  return report_from_params(params, probe_batches(data, batch_seed, batch_size));
}

ConflictSeries track_inner_products(Strategy strategy, const ModelSpec& spec,
                                    const MultiDomainDataset& data,
                                    const TrainConfig& cfg, int epochs,
                                    std::int64_t probe_seed) {
  if (epochs < 0) throw ConfigError("track: epochs must be >= 0");
  if (data.domains.size() < 2) throw ConfigError("track: needs >= 2 domains");
  TrainView view(data, Split::Train);
  const auto batches = probe_batches(data, probe_seed, cfg.batch_size);

  MdrState state = init_mdr_state(spec, data.domains.size(),
                                  static_cast<std::uint64_t>(cfg.seed));
  std::vector<double> log_vars(data.domains.size(), 0.0);
  AdamState adam(state.shared.layout(), cfg.alpha);

  ConflictSeries series;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng = epoch_rng(static_cast<std::uint64_t>(cfg.seed), epoch);
    switch (strategy) {
      case Strategy::Dn:
        state.shared = dn_epoch(state.shared, view, cfg, rng);
        break;
      case Strategy::Alternate:
        state.shared = alternate_epoch(state.shared, view, cfg, rng);
        break;
      case Strategy::Mamdr:
        state = mamdr_epoch(state, view, cfg, rng);
        break;
      case Strategy::Joint:
        state.shared = joint_epoch(state.shared, view, cfg, rng, &adam);
        break;
      case Strategy::Weighted: {
        auto [theta, s] =
            weighted_loss_epoch(state.shared, std::move(log_vars), view, cfg, rng);
        state.shared = std::move(theta);
        log_vars = std::move(s);
        break;
      }
      case Strategy::Pcgrad:
        state.shared = pcgrad_step(state.shared, view, cfg, rng);
        break;
      case Strategy::Reptile:
        state.shared = reptile_epoch(state.shared, view, cfg, rng);
        break;
      case Strategy::Fomaml:
        state.shared = fomaml_epoch(state.shared, view, cfg, rng);
        break;
      case Strategy::Mldg:
        state.shared = mldg_epoch(state.shared, view, cfg, rng);
        break;
      case Strategy::Finetune:
        throw ConfigError("track: finetune has no shared trajectory");
    }
    const auto report = report_from_params(state.shared, batches);
    double mean = 0.0;
    std::size_t pairs = 0;
    const std::size_t n = report.n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        mean += report.cosine[i * n + j];
        ++pairs;
        series.rows.push_back({epoch, static_cast<int>(i), static_cast<int>(j),
                               report.inner[i * n + j],
                               report.cosine[i * n + j]});
      }
    series.mean_cosine.push_back(mean / static_cast<double>(pairs));
  }
  return series;
}

double dn_taylor_residual_neural(const ParamVector& theta0,
                                 const MultiDomainDataset& data, double alpha,
                                 std::int64_t probe_seed,
                                 std::size_t batch_size, double hvp_eps) {
  if (!(alpha > 0.0)) throw ConfigError("dn residual: alpha must be > 0");
  const auto batches = probe_batches(data, probe_seed, batch_size);
  const std::size_t n = batches.size();
  if (n < 2) throw ConfigError("dn residual: needs >= 2 domains");

  // Actual endpoint of one single-step-per-domain pass on the probes.
  ParamVector theta = theta0;
  for (const auto& b : batches)
    sgd_step_(theta, loss_and_grad(theta, b).grad, alpha);
  const ParamVector actual = sub(theta, theta0);

  const auto gbar = probe_grads(theta0, batches);
  ParamVector sum_g = theta0.zeros_like();
  for (const auto& g : gbar) sum_g.add_(g);
  ParamVector cross = theta0.zeros_like();
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double scale = norm(gbar[j]);
      if (scale == 0.0) continue;
      // hvp along the unit direction, rescaled, keeps the finite-difference
      // probe step independent of gradient magnitude.
      ParamVector unit = gbar[j];
      unit.scale_(1.0 / scale);
      ParamVector hv = hvp(theta0, batches[i], unit, hvp_eps);
      hv.scale_(scale);
      cross.add_(hv);
    }
  ParamVector pred = sum_g;
  pred.axpy_(-alpha, cross);
  pred.scale_(-alpha);

  const double scale = norm(actual);
  if (scale == 0.0) throw EvalError("dn residual: zero actual delta");
  return norm(sub(actual, pred)) / scale;
}

}  // namespace mdopt
