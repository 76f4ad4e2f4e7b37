#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "mdopt/model.hpp"
#include "mdopt/rng.hpp"

using namespace mdopt;

namespace {

ModelSpec small_spec(Activation act = Activation::Relu) {
  ModelSpec spec;
  spec.num_users = 12;
  spec.num_items = 9;
  spec.embed_dim = 4;
  spec.hidden = {8, 5};
  spec.activation = act;
  return spec;
}

Batch random_batch(const ModelSpec& spec, std::size_t n, Rng& rng) {
  Batch b;
  std::uniform_int_distribution<std::int64_t> u(0, spec.num_users - 1);
  std::uniform_int_distribution<std::int64_t> v(0, spec.num_items - 1);
  std::uniform_int_distribution<int> y(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    b.user_ids.push_back(u(rng));
    b.item_ids.push_back(v(rng));
    b.labels.push_back(static_cast<double>(y(rng)));
  }
  return b;
}

double fd_loss_grad(const ParamVector& p, const Batch& b, std::size_t idx,
                    double h) {
  ParamVector plus = p;
  plus[idx] += h;
  ParamVector minus = p;
  minus[idx] -= h;
  return (loss_only(plus, b) - loss_only(minus, b)) / (2.0 * h);
}

}  // namespace

TEST_CASE("layout: blocks are contiguous and the count formula holds") {
  const ModelSpec spec = small_spec();
  auto layout = ParamLayout::make(spec);

  std::size_t expect = 0;
  expect += 12 * 4 + 9 * 4;       // embedding tables
  expect += 8 * 8 + 8;            // dense0: in=2*4
  expect += 8 * 5 + 5;            // dense1
  expect += 5 * 1 + 1;            // head
  CHECK(layout->total() == expect);
  CHECK(spec.param_count() == expect);

  std::size_t offset = 0;
  for (const auto& blk : layout->blocks()) {
    CHECK(blk.offset == offset);
    offset += blk.size();
  }
  CHECK(offset == layout->total());

  CHECK(layout->block("user_table").rows == 12);
  CHECK(layout->block("user_table").cols == 4);
  CHECK(layout->block("item_table").rows == 9);
  CHECK(layout->block("dense0_w").rows == 8);
  CHECK(layout->block("dense0_w").cols == 8);
  CHECK(layout->block("dense1_w").rows == 8);
  CHECK(layout->block("dense1_w").cols == 5);
  CHECK(layout->block("head_w").rows == 5);
  CHECK(layout->block("head_w").cols == 1);
  CHECK(layout->block("head_b").size() == 1);
  CHECK_THROWS_AS((void)layout->block("nope"), LayoutError);
}

TEST_CASE("spec validation rejects degenerate shapes") {
  ModelSpec spec = small_spec();
  spec.num_users = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.embed_dim = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.hidden = {};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.hidden = {4, 0};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("init: deterministic per seed, zero biases, fan-in bounds") {
  const ModelSpec spec = small_spec();
  const ParamVector a = init_params(spec, 7);
  const ParamVector b = init_params(spec, 7);
  const ParamVector c = init_params(spec, 8);

  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());

  for (double x : a.block_span("dense0_b")) CHECK(x == 0.0);
  for (double x : a.block_span("dense1_b")) CHECK(x == 0.0);
  CHECK(a.block_span("head_b")[0] == 0.0);

  const double eb = 1.0 / std::sqrt(4.0);  // embeddings: fan-in = embed_dim
  for (double x : a.block_span("user_table")) CHECK(std::abs(x) <= eb);
  for (double x : a.block_span("item_table")) CHECK(std::abs(x) <= eb);
  const double d0 = 1.0 / std::sqrt(8.0);  // dense: fan-in = input width
  for (double x : a.block_span("dense0_w")) CHECK(std::abs(x) <= d0);
  const double hw = 1.0 / std::sqrt(5.0);
  for (double x : a.block_span("head_w")) CHECK(std::abs(x) <= hw);

  // Weight blocks are actually random, not degenerate.
  std::set<double> uniq(a.block_span("dense0_w").begin(),
                        a.block_span("dense0_w").end());
  CHECK(uniq.size() > 50);
}

TEST_CASE("zero parameters give probability 1/2 and loss ln 2") {
  for (auto act : {Activation::Relu, Activation::Tanh}) {
    const ModelSpec spec = small_spec(act);
    ParamVector zero(ParamLayout::make(spec));
    Batch b;
    b.user_ids = {0, 3, 11};
    b.item_ids = {2, 2, 8};
    b.labels = {1, 0, 1};
    for (double p : forward(zero, b)) CHECK(p == 0.5);
    for (double z : forward_logits(zero, b)) CHECK(z == 0.0);
    CHECK(loss_only(zero, b) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("single-hidden-unit tanh network matches a hand computation") {
  ModelSpec spec;
  spec.num_users = 1;
  spec.num_items = 1;
  spec.embed_dim = 1;
  spec.hidden = {1};
  spec.activation = Activation::Tanh;

  ParamVector p(ParamLayout::make(spec));
  p.block_span("user_table")[0] = 0.3;
  p.block_span("item_table")[0] = -0.2;
  p.block_span("dense0_w")[0] = 0.7;  // weight on the user coordinate
  p.block_span("dense0_w")[1] = 0.5;  // weight on the item coordinate
  p.block_span("dense0_b")[0] = 0.1;
  p.block_span("head_w")[0] = 1.2;
  p.block_span("head_b")[0] = -0.05;

  const double pre = 0.1 + 0.3 * 0.7 + (-0.2) * 0.5;
  const double h = std::tanh(pre);
  const double logit = -0.05 + 1.2 * h;
  const double prob = 1.0 / (1.0 + std::exp(-logit));

  Batch b;
  b.user_ids = {0};
  b.item_ids = {0};
  b.labels = {1};

  CHECK(forward_logits(p, b)[0] == doctest::Approx(logit).epsilon(1e-14));
  CHECK(forward(p, b)[0] == doctest::Approx(prob).epsilon(1e-14));

  const auto lg = loss_and_grad(p, b);
  const double want_loss = std::log(1.0 + std::exp(logit)) - logit;
  CHECK(lg.loss == doctest::Approx(want_loss).epsilon(1e-12));

  const double dlogit = prob - 1.0;
  const double dpre = 1.2 * dlogit * (1.0 - h * h);
  CHECK(lg.grad.block_span("head_b")[0] == doctest::Approx(dlogit).epsilon(1e-12));
  CHECK(lg.grad.block_span("head_w")[0] ==
        doctest::Approx(h * dlogit).epsilon(1e-12));
  CHECK(lg.grad.block_span("dense0_b")[0] == doctest::Approx(dpre).epsilon(1e-12));
  CHECK(lg.grad.block_span("dense0_w")[0] ==
        doctest::Approx(0.3 * dpre).epsilon(1e-12));
  CHECK(lg.grad.block_span("dense0_w")[1] ==
        doctest::Approx(-0.2 * dpre).epsilon(1e-12));
  CHECK(lg.grad.block_span("user_table")[0] ==
        doctest::Approx(0.7 * dpre).epsilon(1e-12));
  CHECK(lg.grad.block_span("item_table")[0] ==
        doctest::Approx(0.5 * dpre).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences per block") {
  for (auto act : {Activation::Tanh, Activation::Relu}) {
    const ModelSpec spec = small_spec(act);
    const ParamVector p = init_params(spec, 3);
    Rng rng(mix_seed(41));
    const Batch b = random_batch(spec, 16, rng);
    const auto lg = loss_and_grad(p, b);

    const double h = 1e-5;
    for (const auto& blk : p.layout()->blocks()) {
      std::uniform_int_distribution<std::size_t> pick(0, blk.size() - 1);
      for (int t = 0; t < 20; ++t) {
        const std::size_t idx = blk.offset + pick(rng);
        const double analytic = lg.grad[idx];
        const double fd = fd_loss_grad(p, b, idx, h);
        const double denom =
            std::max({std::abs(analytic), std::abs(fd), 1e-4});
        CHECK(std::abs(fd - analytic) / denom <= 1e-5);
      }
    }
  }
}

TEST_CASE("embedding rows the batch never touches get zero gradient") {
  const ModelSpec spec = small_spec();
  const ParamVector p = init_params(spec, 5);
  Batch b;
  b.user_ids = {0, 1, 0};
  b.item_ids = {0, 0, 0};
  b.labels = {1, 0, 1};
  const auto lg = loss_and_grad(p, b);
  const auto e = static_cast<std::size_t>(spec.embed_dim);
  const auto gu = lg.grad.block_span("user_table");
  for (std::size_t i = 2 * e; i < gu.size(); ++i) CHECK(gu[i] == 0.0);
  const auto gv = lg.grad.block_span("item_table");
  for (std::size_t i = e; i < gv.size(); ++i) CHECK(gv[i] == 0.0);
  // Touched rows do receive gradient.
  double touched = 0.0;
  for (std::size_t i = 0; i < 2 * e; ++i) touched += std::abs(gu[i]);
  CHECK(touched > 0.0);
}

TEST_CASE("duplicated sample changes nothing about the mean loss") {
  const ModelSpec spec = small_spec();
  const ParamVector p = init_params(spec, 11);
  Batch one;
  one.user_ids = {4};
  one.item_ids = {2};
  one.labels = {1};
  Batch two;
  two.user_ids = {4, 4};
  two.item_ids = {2, 2};
  two.labels = {1, 1};
  const auto lg1 = loss_and_grad(p, one);
  const auto lg2 = loss_and_grad(p, two);
  CHECK(lg2.loss == doctest::Approx(lg1.loss).epsilon(1e-15));
  for (std::size_t i = 0; i < lg1.grad.size(); ++i)
    CHECK(lg2.grad[i] == doctest::Approx(lg1.grad[i]).epsilon(1e-12));
}

TEST_CASE("unit sample weights reproduce the unweighted path bitwise") {
  const ModelSpec spec = small_spec();
  const ParamVector p = init_params(spec, 13);
  Rng rng(mix_seed(55));
  const Batch b = random_batch(spec, 10, rng);
  const std::vector<double> ones(b.size(), 1.0);
  const auto plain = loss_and_grad(p, b);
  const auto weighted = loss_and_grad(p, b, ones);
  CHECK(plain.loss == weighted.loss);
  CHECK(plain.grad.values() == weighted.grad.values());
  CHECK(loss_only(p, b) == plain.loss);
}

TEST_CASE("sample weights scale each sample's loss term") {
  const ModelSpec spec = small_spec();
  const ParamVector p = init_params(spec, 17);
  Batch b;
  b.user_ids = {1, 2};
  b.item_ids = {3, 4};
  b.labels = {1, 0};
  const std::vector<double> w = {2.0, 0.5};
  const auto logits = forward_logits(p, b);
  const double want =
      (2.0 * bce_from_logit(logits[0], 1.0) + 0.5 * bce_from_logit(logits[1], 0.0)) /
      2.0;
  CHECK(loss_only(p, b, w) == doctest::Approx(want).epsilon(1e-15));

  // Weighted gradient still matches finite differences of the weighted loss.
  const auto lg = loss_and_grad(p, b, w);
  Rng rng(mix_seed(19));
  std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
  for (int t = 0; t < 30; ++t) {
    const std::size_t idx = pick(rng);
    ParamVector plus = p;
    plus[idx] += 1e-5;
    ParamVector minus = p;
    minus[idx] -= 1e-5;
    const double fd = (loss_only(plus, b, w) - loss_only(minus, b, w)) / 2e-5;
    CHECK(std::abs(fd - lg.grad[idx]) <=
          1e-5 * std::max({std::abs(fd), std::abs(lg.grad[idx]), 1e-4}));
  }
}

TEST_CASE("bce_from_logit is stable at extreme logits") {
  CHECK(bce_from_logit(0.0, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_from_logit(0.0, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_from_logit(1000.0, 1.0) == 0.0);
  CHECK(bce_from_logit(-1000.0, 0.0) == 0.0);
  CHECK(bce_from_logit(1000.0, 0.0) == 1000.0);
  CHECK(bce_from_logit(-1000.0, 1.0) == 1000.0);
  CHECK(std::isfinite(bce_from_logit(750.0, 0.5)));
}

TEST_CASE("batch validation catches shape and range errors") {
  const ModelSpec spec = small_spec();
  const ParamVector p = init_params(spec, 1);
  Batch b;
  b.user_ids = {0};
  b.item_ids = {0, 1};
  b.labels = {1};
  CHECK_THROWS_AS((void)forward(p, b), IndexError);

  Batch empty;
  CHECK_THROWS_AS((void)forward(p, empty), IndexError);

  Batch oob;
  oob.user_ids = {12};
  oob.item_ids = {0};
  oob.labels = {0};
  CHECK_THROWS_AS((void)loss_and_grad(p, oob), IndexError);

  Batch ok;
  ok.user_ids = {0};
  ok.item_ids = {0};
  ok.labels = {1};
  const std::vector<double> bad_w = {1.0, 1.0};
  CHECK_THROWS_AS((void)loss_and_grad(p, ok, bad_w), IndexError);
}

TEST_CASE("vector algebra: combine, axpy, dot, layout guards") {
  const ModelSpec spec = small_spec();
  const ParamVector a = init_params(spec, 2);
  ParamVector z = a.zeros_like();
  CHECK(combine(a, z).values() == a.values());

  ParamVector b = a;
  b.axpy_(2.0, a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == a[i] + 2.0 * a[i]);

  CHECK(dot(a, z) == 0.0);
  CHECK(norm(z) == 0.0);
  CHECK(norm(a) == doctest::Approx(std::sqrt(dot(a, a))));

  ModelSpec other = spec;
  other.num_users += 1;
  ParamVector c(ParamLayout::make(other));
  CHECK_THROWS_AS((void)combine(a, c), LayoutError);
  CHECK_THROWS_AS((void)dot(a, c), LayoutError);

  // Equal specs from different layout objects are still compatible.
  ParamVector d(ParamLayout::make(spec));
  CHECK(a.same_layout(d));
}

TEST_CASE("hvp of an analytic linear gradient field recovers the matrix") {
  ModelSpec spec;
  spec.num_users = 1;
  spec.num_items = 1;
  spec.embed_dim = 2;
  spec.hidden = {2};
  auto layout = ParamLayout::make(spec);
  const std::size_t n = layout->total();

  Rng rng(mix_seed(77));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = m[j * n + i] = nd(rng);

  auto grad_fn = [&](const ParamVector& p) {
    ParamVector g(layout);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += m[i * n + j] * p[j];
      g[i] = s;
    }
    return g;
  };

  ParamVector p(layout), v(layout);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = nd(rng);
    v[i] = nd(rng);
  }
  const ParamVector hv = hvp_of(grad_fn, p, v, 1e-3);
  for (std::size_t i = 0; i < n; ++i) {
    double want = 0.0;
    for (std::size_t j = 0; j < n; ++j) want += m[i * n + j] * v[j];
    CHECK(hv[i] == doctest::Approx(want).epsilon(1e-9));
  }

  CHECK_THROWS_AS((void)hvp_of(grad_fn, p, v, 0.0), ConfigError);
  ParamVector zero(layout);
  CHECK_THROWS_AS((void)hvp_of(grad_fn, p, zero, 1e-3), ConfigError);
}

TEST_CASE("model hvp is symmetric in its two directions") {
  const ModelSpec spec = small_spec(Activation::Tanh);
  const ParamVector p = init_params(spec, 23);
  Rng rng(mix_seed(29));
  const Batch b = random_batch(spec, 12, rng);

  std::normal_distribution<double> nd(0.0, 1.0);
  ParamVector v1(p.layout()), v2(p.layout());
  for (std::size_t i = 0; i < p.size(); ++i) {
    v1[i] = nd(rng);
    v2[i] = nd(rng);
  }
  v1.scale_(1.0 / norm(v1));
  v2.scale_(1.0 / norm(v2));

  const double a12 = dot(hvp(p, b, v1, 1e-5), v2);
  const double a21 = dot(hvp(p, b, v2, 1e-5), v1);
  CHECK(a12 == doctest::Approx(a21).epsilon(1e-4));
}
