#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <random>

#include "mdopt/dataset.hpp"
#include "mdopt/metrics.hpp"
#include "mdopt/strategies.hpp"

using namespace mdopt;

namespace {

MultiDomainDataset make_data(int n_domains, std::int64_t seed) {
  SyntheticSpec spec;
  spec.n_domains = n_domains;
  spec.users_per_domain = 30;
  spec.items_per_domain = 24;
  spec.positives_per_domain = 60;
  spec.latent_dim = 4;
  spec.seed = seed;
  return generate(spec);  // everything in the train split
}

ModelSpec model_for(const MultiDomainDataset& ds) {
  ModelSpec spec;
  spec.num_users = ds.num_users;
  spec.num_items = ds.num_items;
  spec.embed_dim = 4;
  spec.hidden = {8};
  return spec;
}

TrainConfig fast_cfg() {
  TrainConfig cfg;
  cfg.alpha = 0.05;
  cfg.beta = 0.5;
  cfg.gamma = 0.5;
  cfg.k = 1;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  return cfg;
}

// Two domains of balanced duplicate pairs: every (user, item) appears once
// with each label, so the full-batch gradient at the zero model vanishes.
MultiDomainDataset balanced_pairs() {
  MultiDomainDataset ds;
  ds.num_users = 2;
  ds.num_items = 2;
  ds.domains.resize(2);
  for (int d = 0; d < 2; ++d) {
    auto& dom = ds.domains[d];
    dom.domain_id = d;
    for (int u = 0; u < 2; ++u)
      for (int label : {1, 0}) dom.interactions.push_back({u, (u + d) % 2, label});
    dom.train = {0, 1, 2, 3};
  }
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range hyperparameters") {
  TrainConfig cfg = fast_cfg();
  CHECK_NOTHROW(cfg.validate(3));
  CHECK_THROWS_AS(cfg.validate(0), ConfigError);

  cfg = fast_cfg();
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.beta = 0.0;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.beta = 1.5;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.gamma = -0.1;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = fast_cfg();
  cfg.inner_steps_per_domain = 0;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
}

TEST_CASE("strategy and optimizer names round-trip") {
  for (auto s : {Strategy::Dn, Strategy::Alternate, Strategy::Mamdr,
                 Strategy::Joint, Strategy::Finetune, Strategy::Weighted,
                 Strategy::Pcgrad, Strategy::Reptile, Strategy::Fomaml,
                 Strategy::Mldg})
    CHECK(strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS((void)strategy_from_string("nope"), ConfigError);
  for (auto o : {Optimizer::Sgd, Optimizer::Adam})
    CHECK(optimizer_from_string(to_string(o)) == o);
  CHECK_THROWS_AS((void)optimizer_from_string("sgdm"), ConfigError);
}

TEST_CASE("fresh state: zero specifics behave as the shared model") {
  const MultiDomainDataset ds = make_data(3, 1);
  const ModelSpec spec = model_for(ds);
  const MdrState state = init_mdr_state(spec, 3, 5);
  CHECK(state.n_domains() == 3);
  CHECK(state.shared.values() == init_params(spec, 5).values());
  for (const auto& s : state.specific) {
    CHECK(norm(s) == 0.0);
    CHECK(combine(state.shared, s).values() == state.shared.values());
  }
}

TEST_CASE("full endpoint adoption reduces negotiation to alternate training") {
  for (int n : {1, 2, 6}) {
    const MultiDomainDataset ds = make_data(n, 10 + n);
    const TrainView view(ds);
    const ParamVector shared = init_params(model_for(ds), 3);
    TrainConfig cfg = fast_cfg();
    cfg.beta = 1.0;
    Rng r1(mix_seed(99));
    Rng r2(mix_seed(99));
    const ParamVector a = dn_epoch(shared, view, cfg, r1);
    const ParamVector b = alternate_epoch(shared, view, cfg, r2);
    CHECK(a.values() == b.values());
  }
}

TEST_CASE("one-domain negotiation epoch unrolls to an interpolated sgd step") {
  const MultiDomainDataset ds = make_data(1, 4);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 7);
  TrainConfig cfg = fast_cfg();
  cfg.beta = 0.3;

  Rng rng(mix_seed(5));
  const ParamVector got = dn_epoch(shared, view, cfg, rng);

  // Replay the internal draw order: shuffle of the one-domain visit list,
  // then one minibatch.
  Rng replay(mix_seed(5));
  std::vector<std::size_t> order = {0};
  std::shuffle(order.begin(), order.end(), replay);
  const Batch batch = view.sample_batch(0, cfg.batch_size, replay);
  const auto lg = loss_and_grad(shared, batch);
  const ParamVector endpoint = sgd_step(shared, lg.grad, cfg.alpha);
  const ParamVector want = outer_step(shared, endpoint, cfg.beta);
  CHECK(got.values() == want.values());
}

TEST_CASE("negotiation epoch is deterministic in the rng seed") {
  const MultiDomainDataset ds = make_data(4, 2);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 1);
  const TrainConfig cfg = fast_cfg();
  Rng a(42), b(42), c(43);
  CHECK(dn_epoch(shared, view, cfg, a).values() ==
        dn_epoch(shared, view, cfg, b).values());
  CHECK(dn_epoch(shared, view, cfg, a).values() !=
        dn_epoch(shared, view, cfg, c).values());
}

TEST_CASE("regularization update with full adoption replays the two steps") {
  const MultiDomainDataset ds = make_data(2, 3);
  const TrainView view(ds);
  const ModelSpec spec = model_for(ds);
  MdrState state = init_mdr_state(spec, 2, 9);
  // Give the target a nonzero starting specific vector.
  state.specific[0].block_span("head_b")[0] = 0.25;

  TrainConfig cfg = fast_cfg();
  cfg.gamma = 1.0;
  cfg.k = 1;

  Rng rng(mix_seed(13));
  const ParamVector got = dr_update(state, 0, view, cfg, rng);

  Rng replay(mix_seed(13));
  std::vector<std::size_t> others = {1};
  std::vector<std::size_t> sampled;
  std::sample(others.begin(), others.end(), std::back_inserter(sampled), 1,
              replay);
  REQUIRE(sampled == others);
  ParamVector tilde = state.specific[0];
  const Batch bj = view.sample_batch(1, cfg.batch_size, replay);
  sgd_step_(tilde, loss_and_grad(combine(state.shared, tilde), bj).grad,
            cfg.alpha);
  const Batch bi = view.sample_batch(0, cfg.batch_size, replay);
  sgd_step_(tilde, loss_and_grad(combine(state.shared, tilde), bi).grad,
            cfg.alpha);
  CHECK(got.values() == tilde.values());
}

TEST_CASE("regularization update guards its domain arguments") {
  const MultiDomainDataset ds = make_data(3, 6);
  const TrainView view(ds);
  MdrState state = init_mdr_state(model_for(ds), 3, 1);
  TrainConfig cfg = fast_cfg();
  Rng rng(1);
  CHECK_THROWS_AS((void)dr_update(state, 9, view, cfg, rng), IndexError);
  cfg.k = 5;  // only 2 other domains exist
  CHECK_THROWS_AS((void)dr_update(state, 0, view, cfg, rng), ConfigError);
}

TEST_CASE("one mamdr epoch spends exactly n*steps + 2*n*k gradient calls") {
  struct Case {
    int n;
    int k;
  };
  for (const auto cs : {Case{6, 3}, Case{10, 5}}) {
    const MultiDomainDataset ds = make_data(cs.n, 20 + cs.n);
    const TrainView view(ds);
    MdrState state = init_mdr_state(model_for(ds), static_cast<std::size_t>(cs.n), 2);
    TrainConfig cfg = fast_cfg();
    cfg.k = cs.k;
    TrainStats stats;
    Rng rng(mix_seed(7));
    (void)mamdr_epoch(state, view, cfg, rng, &stats);
    CHECK(stats.grad_evals == cs.n + 2 * cs.n * cs.k);

    // Extra inner steps scale only the negotiation term.
    TrainStats stats2;
    cfg.inner_steps_per_domain = 3;
    Rng rng2(mix_seed(7));
    (void)mamdr_epoch(state, view, cfg, rng2, &stats2);
    CHECK(stats2.grad_evals == 3 * cs.n + 2 * cs.n * cs.k);
  }
}

TEST_CASE("zero training epochs return the state unchanged") {
  const MultiDomainDataset ds = make_data(3, 8);
  const TrainView view(ds);
  MdrState state = init_mdr_state(model_for(ds), 3, 4);
  TrainConfig cfg = fast_cfg();
  cfg.epochs = 0;
  const MdrState out = mamdr_train(state, view, cfg);
  CHECK(out.shared.values() == state.shared.values());
  for (std::size_t d = 0; d < 3; ++d)
    CHECK(out.specific[d].values() == state.specific[d].values());
}

TEST_CASE("mamdr training is reproducible run-to-run") {
  const MultiDomainDataset ds = make_data(3, 12);
  const TrainView view(ds);
  const MdrState state = init_mdr_state(model_for(ds), 3, 4);
  TrainConfig cfg = fast_cfg();
  cfg.epochs = 2;
  cfg.seed = 77;
  const MdrState a = mamdr_train(state, view, cfg);
  const MdrState b = mamdr_train(state, view, cfg);
  CHECK(a.shared.values() == b.shared.values());
  for (std::size_t d = 0; d < 3; ++d)
    CHECK(a.specific[d].values() == b.specific[d].values());
  // Training moved both parameter groups.
  CHECK(norm(sub(a.shared, state.shared)) > 0.0);
  CHECK(norm(a.specific[0]) > 0.0);
}

TEST_CASE("joint epoch at a zero-gradient point is a fixed point") {
  const MultiDomainDataset ds = balanced_pairs();
  const TrainView view(ds);
  ModelSpec spec = model_for(ds);
  spec.num_users = ds.num_users;
  spec.num_items = ds.num_items;
  ParamVector zero(ParamLayout::make(spec));
  TrainConfig cfg = fast_cfg();
  cfg.batch_size = 64;  // single full batch, so the pairs stay balanced
  Rng rng(3);
  const ParamVector out = joint_epoch(zero, view, cfg, rng);
  CHECK(out.values() == zero.values());
}

TEST_CASE("joint training reduces the train loss") {
  const MultiDomainDataset ds = make_data(3, 14);
  const TrainView view(ds);
  ParamVector theta = init_params(model_for(ds), 6);

  auto train_loss = [&](const ParamVector& p) {
    double total = 0.0;
    for (std::size_t d = 0; d < view.n_domains(); ++d)
      total += loss_only(p, view.full_batch(d));
    return total / static_cast<double>(view.n_domains());
  };

  const double before = train_loss(theta);
  TrainConfig cfg = fast_cfg();
  cfg.alpha = 0.1;
  for (int e = 0; e < 5; ++e) {
    Rng rng = epoch_rng(11, static_cast<std::uint64_t>(e));
    theta = joint_epoch(theta, view, cfg, rng);
  }
  CHECK(train_loss(theta) < before);
}

TEST_CASE("joint epoch with adam differs from sgd and advances its state") {
  const MultiDomainDataset ds = make_data(2, 15);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 2);
  TrainConfig cfg = fast_cfg();

  Rng r1(9), r2(9);
  const ParamVector sgd_out = joint_epoch(shared, view, cfg, r1);
  cfg.optimizer = Optimizer::Adam;
  AdamState adam(shared.layout(), cfg.alpha);
  const ParamVector adam_out = joint_epoch(shared, view, cfg, r2, &adam);
  CHECK(adam.step_count > 0);
  CHECK(sgd_out.values() != adam_out.values());
}

TEST_CASE("finetune with zero epochs copies the shared model per domain") {
  const MultiDomainDataset ds = make_data(3, 16);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 3);
  TrainConfig cfg = fast_cfg();
  cfg.epochs = 0;
  const auto tuned = finetune(shared, view, cfg);
  REQUIRE(tuned.size() == 3);
  for (const auto& t : tuned) CHECK(t.values() == shared.values());
}

TEST_CASE("finetune lowers each domain's own loss") {
  const MultiDomainDataset ds = make_data(3, 18);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 3);
  TrainConfig cfg = fast_cfg();
  cfg.alpha = 0.1;
  cfg.epochs = 4;
  const auto tuned = finetune(shared, view, cfg);
  for (std::size_t d = 0; d < 3; ++d) {
    const Batch full = view.full_batch(d);
    CHECK(loss_only(tuned[d], full) < loss_only(shared, full));
  }
  // Deterministic: domain passes use their own seeded streams.
  const auto again = finetune(shared, view, cfg);
  for (std::size_t d = 0; d < 3; ++d)
    CHECK(tuned[d].values() == again[d].values());
}

TEST_CASE("strategies reject a domain with no train rows by default") {
  MultiDomainDataset ds = make_data(3, 19);
  auto& dom = ds.domains[1];
  dom.interactions.clear();
  dom.train.clear();
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 3);
  TrainConfig cfg = fast_cfg();
  Rng rng(1);
  CHECK_THROWS_AS((void)dn_epoch(shared, view, cfg, rng), DataError);
  CHECK_THROWS_AS((void)finetune(shared, view, cfg), DataError);

  cfg.allow_empty_domains = true;
  CHECK_NOTHROW((void)dn_epoch(shared, view, cfg, rng));
  MdrState state = init_mdr_state(model_for(ds), 3, 3);
  Rng rng2(2);
  const MdrState out = mamdr_epoch(state, view, cfg, rng2);
  // The empty domain's specific vector is left untouched.
  CHECK(out.specific[1].values() == state.specific[1].values());
  CHECK(norm(out.specific[0]) > 0.0);
}

TEST_CASE("frozen unit loss weights reproduce plain joint training bitwise") {
  const MultiDomainDataset ds = make_data(3, 21);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 4);
  TrainConfig cfg = fast_cfg();
  cfg.train_loss_weights = false;

  Rng r1(31), r2(31);
  const ParamVector joint = joint_epoch(shared, view, cfg, r1);
  const auto [weighted, s] = weighted_loss_epoch(
      shared, std::vector<double>(3, 0.0), view, cfg, r2);
  CHECK(joint.values() == weighted.values());
  CHECK(s == std::vector<double>(3, 0.0));
}

TEST_CASE("loss-weight gradient matches the analytic single-batch formula") {
  const MultiDomainDataset ds = make_data(2, 22);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 5);
  TrainConfig cfg = fast_cfg();
  cfg.batch_size = view.total_rows();  // one union batch per epoch
  const std::vector<double> s0 = {0.3, -0.2};

  Rng rng(17);
  const auto [theta, s1] = weighted_loss_epoch(shared, s0, view, cfg, rng);

  // Replay the single batch and apply the hand-derived update for s:
  // ds_d = (1/B) sum over the domain's samples of (1 - exp(-s_d) * bce).
  Rng replay(17);
  const auto tbs = view.union_epoch_batches(cfg.batch_size, replay);
  REQUIRE(tbs.size() == 1);
  const auto& tb = tbs[0];
  const auto logits = forward_logits(shared, tb.batch);
  std::vector<double> want = s0;
  std::vector<double> g(2, 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double bce = bce_from_logit(logits[i], tb.batch.labels[i]);
    g[tb.domains[i]] += 1.0 - std::exp(-s0[tb.domains[i]]) * bce;
  }
  for (int d = 0; d < 2; ++d)
    want[d] -= cfg.alpha * g[d] / static_cast<double>(tb.batch.size());
  CHECK(s1[0] == doctest::Approx(want[0]).epsilon(1e-14));
  CHECK(s1[1] == doctest::Approx(want[1]).epsilon(1e-14));

  // The same s-gradient also agrees with finite differences of the batch
  // objective F(s) = (1/B) sum_i [exp(-s_{d_i}) bce_i + s_{d_i}].
  auto objective = [&](const std::vector<double>& s) {
    double f = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double bce = bce_from_logit(logits[i], tb.batch.labels[i]);
      f += std::exp(-s[tb.domains[i]]) * bce + s[tb.domains[i]];
    }
    return f / static_cast<double>(tb.batch.size());
  };
  for (int d = 0; d < 2; ++d) {
    auto up = s0, dn = s0;
    up[d] += 1e-6;
    dn[d] -= 1e-6;
    const double fd = (objective(up) - objective(dn)) / 2e-6;
    CHECK(fd == doctest::Approx(g[d] / static_cast<double>(tb.batch.size()))
                    .epsilon(1e-6));
  }
}

TEST_CASE("gradient surgery worked example and gating") {
  Rng rng(1);
  const auto out = pcgrad_surgery({{1, 0}, {-1, 1}}, rng);
  CHECK(out[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out[0][1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out[1][0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(out[1][1] == doctest::Approx(1.0).epsilon(1e-15));

  // Orthogonal and aligned pairs pass through untouched.
  const auto ortho = pcgrad_surgery({{1, 0}, {0, 1}}, rng);
  CHECK(ortho[0] == std::vector<double>{1, 0});
  CHECK(ortho[1] == std::vector<double>{0, 1});
  const auto aligned = pcgrad_surgery({{1, 1}, {1, 0}}, rng);
  CHECK(aligned[0] == std::vector<double>{1, 1});
  CHECK(aligned[1] == std::vector<double>{1, 0});

  // A zero gradient is skipped as a projection target.
  const auto with_zero = pcgrad_surgery({{1, 2}, {0, 0}}, rng);
  CHECK(with_zero[0] == std::vector<double>{1, 2});
  CHECK(with_zero[1] == std::vector<double>{0, 0});

  CHECK_THROWS_AS((void)pcgrad_surgery({{1, 0}}, rng), ConfigError);
  CHECK_THROWS_AS((void)pcgrad_surgery({{1, 0}, {1}}, rng), LayoutError);
}

TEST_CASE("projected pairs never conflict with the original gradients") {
  Rng rng(mix_seed(404));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> g(2, std::vector<double>(6));
    for (auto& v : g)
      for (auto& x : v) x = nd(rng);
    const auto out = pcgrad_surgery(g, rng);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        if (i == j) continue;
        double inner = 0.0;
        for (std::size_t t = 0; t < 6; ++t) inner += out[i][t] * g[j][t];
        CHECK(inner >= -1e-12);
      }
  }
}

TEST_CASE("pcgrad step replays as the mean of surgically cleaned gradients") {
  const MultiDomainDataset ds = make_data(3, 23);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 6);
  TrainConfig cfg = fast_cfg();
  TrainStats stats;

  Rng rng(mix_seed(61));
  const ParamVector got = pcgrad_step(shared, view, cfg, rng, &stats);
  CHECK(stats.grad_evals == 3);

  Rng replay(mix_seed(61));
  std::vector<std::vector<double>> raw;
  for (std::size_t d = 0; d < 3; ++d) {
    const Batch batch = view.sample_batch(d, cfg.batch_size, replay);
    raw.push_back(loss_and_grad(shared, batch).grad.values());
  }
  const auto projected = pcgrad_surgery(raw, replay);
  ParamVector mean = shared.zeros_like();
  for (const auto& g : projected)
    for (std::size_t t = 0; t < g.size(); ++t) mean.data()[t] += g[t];
  mean.scale_(1.0 / 3.0);
  CHECK(got.values() == sgd_step(shared, mean, cfg.alpha).values());
}

TEST_CASE("reptile on one domain coincides with negotiation on one domain") {
  const MultiDomainDataset ds = make_data(1, 24);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 7);
  TrainConfig cfg = fast_cfg();
  cfg.inner_steps_per_domain = 2;
  Rng r1(5), r2(5);
  CHECK(reptile_epoch(shared, view, cfg, r1).values() ==
        dn_epoch(shared, view, cfg, r2).values());
}

TEST_CASE("reptile interpolates after every domain, not once at the end") {
  const MultiDomainDataset ds = make_data(3, 25);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 8);
  TrainConfig cfg = fast_cfg();

  Rng rng(mix_seed(71));
  const ParamVector got = reptile_epoch(shared, view, cfg, rng);

  Rng replay(mix_seed(71));
  std::vector<std::size_t> order = {0, 1, 2};
  std::shuffle(order.begin(), order.end(), replay);
  ParamVector theta = shared;
  for (auto d : order) {
    ParamVector inner = theta;
    const Batch batch = view.sample_batch(d, cfg.batch_size, replay);
    sgd_step_(inner, loss_and_grad(inner, batch).grad, cfg.alpha);
    theta = outer_step(theta, inner, cfg.beta);
  }
  CHECK(got.values() == theta.values());
}

TEST_CASE("first-order maml averages query gradients at adapted points") {
  const MultiDomainDataset ds = make_data(3, 26);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 9);
  TrainConfig cfg = fast_cfg();
  TrainStats stats;

  Rng rng(mix_seed(81));
  const ParamVector got = fomaml_epoch(shared, view, cfg, rng, &stats);
  CHECK(stats.grad_evals == 3 * 2);  // one support and one query per domain

  Rng replay(mix_seed(81));
  ParamVector acc = shared.zeros_like();
  for (std::size_t d = 0; d < 3; ++d) {
    ParamVector adapted = shared;
    const Batch support = view.sample_batch(d, cfg.batch_size, replay);
    sgd_step_(adapted, loss_and_grad(adapted, support).grad, cfg.alpha);
    const Batch query = view.sample_batch(d, cfg.batch_size, replay);
    acc.add_(loss_and_grad(adapted, query).grad);
  }
  acc.scale_(1.0 / 3.0);
  CHECK(got.values() == sgd_step(shared, acc, cfg.beta).values());
}

TEST_CASE("meta-test weight zero reduces mldg to a meta-train sgd step") {
  const MultiDomainDataset ds = make_data(6, 27);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 10);
  TrainConfig cfg = fast_cfg();
  cfg.mldg_beta = 0.0;

  Rng rng(mix_seed(91));
  const ParamVector got = mldg_epoch(shared, view, cfg, rng);

  // The shuffle puts the first ceil(6/3)=2 domains into the meta-test group;
  // meta-train batches are drawn first, in group order.
  Rng replay(mix_seed(91));
  std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5};
  std::shuffle(order.begin(), order.end(), replay);
  const std::size_t n_test = 2;
  ParamVector g_train = shared.zeros_like();
  for (std::size_t t = n_test; t < order.size(); ++t) {
    const Batch batch = view.sample_batch(order[t], cfg.batch_size, replay);
    g_train.add_(loss_and_grad(shared, batch).grad);
  }
  g_train.scale_(1.0 / 4.0);
  CHECK(got.values() == sgd_step(shared, g_train, cfg.alpha).values());
}

TEST_CASE("mldg needs two domains and is deterministic") {
  const MultiDomainDataset ds1 = make_data(1, 28);
  const TrainView v1(ds1);
  const ParamVector shared1 = init_params(model_for(ds1), 11);
  TrainConfig cfg = fast_cfg();
  Rng rng(1);
  CHECK_THROWS_AS((void)mldg_epoch(shared1, v1, cfg, rng), ConfigError);

  const MultiDomainDataset ds = make_data(4, 29);
  const TrainView view(ds);
  const ParamVector shared = init_params(model_for(ds), 11);
  Rng a(6), b(6);
  CHECK(mldg_epoch(shared, view, cfg, a).values() ==
        mldg_epoch(shared, view, cfg, b).values());
}

TEST_CASE("non-finite parameters surface as divergence with a domain tag") {
  const MultiDomainDataset ds = make_data(2, 30);
  const TrainView view(ds);
  ParamVector shared = init_params(model_for(ds), 12);
  // The head bias feeds every logit, so the poison reaches the first batch.
  shared.block_span("head_b")[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = fast_cfg();
  Rng rng(1);
  try {
    (void)dn_epoch(shared, view, cfg, rng);
    CHECK(false);
  } catch (const DivergenceError& e) {
    CHECK(e.domain_id >= 0);
    CHECK(e.domain_id < 2);
  }
}
