#include "mdopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdopt/rng.hpp"

namespace mdopt {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "tanh";
}

void ModelSpec::validate() const {
  if (num_users < 1 || num_items < 1)
    throw ConfigError("model: num_users and num_items must be >= 1");
  if (embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1");
  if (hidden.empty()) throw ConfigError("model: hidden layer list is empty");
  for (auto w : hidden)
    if (w < 1) throw ConfigError("model: hidden widths must be >= 1");
}

std::size_t ModelSpec::param_count() const {
  return ParamLayout::make(*this)->total();
}

std::shared_ptr<const ParamLayout> ParamLayout::make(const ModelSpec& spec) {
  spec.validate();
  auto layout = std::make_shared<ParamLayout>();
  layout->spec_ = spec;
  std::size_t offset = 0;
  auto push = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    layout->blocks_.push_back({name, offset, rows, cols});
    offset += rows * cols;
  };
  const auto e = static_cast<std::size_t>(spec.embed_dim);
  push("user_table", static_cast<std::size_t>(spec.num_users), e);
  push("item_table", static_cast<std::size_t>(spec.num_items), e);
  std::size_t in = 2 * e;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const auto out = static_cast<std::size_t>(spec.hidden[l]);
    push("dense" + std::to_string(l) + "_w", in, out);
    push("dense" + std::to_string(l) + "_b", 1, out);
    in = out;
  }
  push("head_w", in, 1);
  push("head_b", 1, 1);
  layout->total_ = offset;
  return layout;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw LayoutError("no parameter block named " + name);
}

std::span<double> ParamVector::block_span(const std::string& name) {
  const auto& b = layout_->block(name);
  return {values_.data() + b.offset, b.size()};
}

std::span<const double> ParamVector::block_span(const std::string& name) const {
  const auto& b = layout_->block(name);
  return {values_.data() + b.offset, b.size()};
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (!layout_ || !other.layout_) return layout_ == other.layout_;
  return layout_ == other.layout_ || *layout_ == *other.layout_;
}

void ParamVector::require_same_layout(const ParamVector& other,
                                      const char* op) const {
  if (!same_layout(other))
    throw LayoutError(std::string(op) + ": parameter layouts differ");
}

ParamVector& ParamVector::add_(const ParamVector& other) {
  require_same_layout(other, "add");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParamVector& ParamVector::sub_(const ParamVector& other) {
  require_same_layout(other, "sub");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ParamVector& ParamVector::scale_(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

ParamVector& ParamVector::axpy_(double a, const ParamVector& x) {
  require_same_layout(x, "axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
  return *this;
}

bool ParamVector::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

double dot(const ParamVector& a, const ParamVector& b) {
  a.require_same_layout(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

ParamVector add(const ParamVector& a, const ParamVector& b) {
  ParamVector out = a;
  out.add_(b);
  return out;
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  ParamVector out = a;
  out.sub_(b);
  return out;
}

ParamVector scale(const ParamVector& a, double s) {
  ParamVector out = a;
  out.scale_(s);
  return out;
}

ParamVector combine(const ParamVector& shared, const ParamVector& specific) {
  shared.require_same_layout(specific, "combine");
  return add(shared, specific);
}

void Batch::validate(const ModelSpec& spec) const {
  if (user_ids.size() != item_ids.size() || user_ids.size() != labels.size())
    throw IndexError("batch: user/item/label vectors have different lengths");
  if (user_ids.empty()) throw IndexError("batch: empty");
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    if (user_ids[i] < 0 || user_ids[i] >= spec.num_users)
      throw IndexError("batch: user id " + std::to_string(user_ids[i]) +
                       " out of range");
    if (item_ids[i] < 0 || item_ids[i] >= spec.num_items)
      throw IndexError("batch: item id " + std::to_string(item_ids[i]) +
                       " out of range");
  }
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t rng_seed) {
  auto layout = ParamLayout::make(spec);
  ParamVector params(layout);
  Rng rng(mix_seed(rng_seed));
  for (const auto& block : layout->blocks()) {
    if (block.name.ends_with("_b")) continue;  // biases stay zero
    // Embedding rows are combined with weight columns downstream, so their
    // fan-in is the embedding width; dense blocks use their input width.
    const std::size_t fan_in =
        block.name.ends_with("_table") ? block.cols : block.rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* p = params.data() + block.offset;
    for (std::size_t i = 0; i < block.size(); ++i) p[i] = dist(rng);
  }
  return params;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

double bce_from_logit(double logit, double y) {
  return softplus(logit) - y * logit;
}

namespace {

struct Workspace {
  // Activation values per dense layer plus the concatenated embedding input,
  // reused across samples.
  std::vector<std::vector<double>> act;      // act[0] = input, act[l+1] = layer l output
  std::vector<std::vector<double>> pre;      // pre-activation per dense layer
  std::vector<std::vector<double>> delta;    // backprop buffers, same shapes as act
  std::vector<std::size_t> dims;

  explicit Workspace(const ModelSpec& spec) {
    dims.push_back(2 * static_cast<std::size_t>(spec.embed_dim));
    for (auto h : spec.hidden) dims.push_back(static_cast<std::size_t>(h));
    act.resize(dims.size());
    delta.resize(dims.size());
    pre.resize(spec.hidden.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
      act[i].assign(dims[i], 0.0);
      delta[i].assign(dims[i], 0.0);
      if (i > 0) pre[i - 1].assign(dims[i], 0.0);
    }
  }
};

// Runs the MLP on one sample; assumes ws.act[0] already holds the input.
double forward_sample(const ModelSpec& spec, const ParamVector& params,
                      Workspace& ws) {
  const std::size_t n_layers = spec.hidden.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto w = params.block_span("dense" + std::to_string(l) + "_w");
    const auto b = params.block_span("dense" + std::to_string(l) + "_b");
    const std::size_t in = ws.dims[l];
    const std::size_t out = ws.dims[l + 1];
    const auto& z = ws.act[l];
    auto& a = ws.pre[l];
    for (std::size_t o = 0; o < out; ++o) a[o] = b[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double zi = z[i];
      if (zi == 0.0) continue;
      const double* wrow = w.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) a[o] += zi * wrow[o];
    }
    auto& y = ws.act[l + 1];
    if (spec.activation == Activation::Relu) {
      for (std::size_t o = 0; o < out; ++o) y[o] = a[o] > 0.0 ? a[o] : 0.0;
    } else {
      for (std::size_t o = 0; o < out; ++o) y[o] = std::tanh(a[o]);
    }
  }
  const auto hw = params.block_span("head_w");
  const auto hb = params.block_span("head_b");
  double logit = hb[0];
  const auto& top = ws.act[n_layers];
  for (std::size_t i = 0; i < top.size(); ++i) logit += top[i] * hw[i];
  return logit;
}

void load_input(const ParamVector& params, std::int64_t u, std::int64_t v,
                Workspace& ws) {
  const auto& spec = params.layout()->spec();
  const auto e = static_cast<std::size_t>(spec.embed_dim);
  const auto users = params.block_span("user_table");
  const auto items = params.block_span("item_table");
  auto& x = ws.act[0];
  const double* ue = users.data() + static_cast<std::size_t>(u) * e;
  const double* ve = items.data() + static_cast<std::size_t>(v) * e;
  std::copy(ue, ue + e, x.begin());
  std::copy(ve, ve + e, x.begin() + static_cast<std::ptrdiff_t>(e));
}

}  // namespace

std::vector<double> forward_logits(const ParamVector& params, const Batch& batch) {
  const auto& spec = params.layout()->spec();
  batch.validate(spec);
  Workspace ws(spec);
  std::vector<double> logits(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    load_input(params, batch.user_ids[s], batch.item_ids[s], ws);
    logits[s] = forward_sample(spec, params, ws);
  }
  return logits;
}

std::vector<double> forward(const ParamVector& params, const Batch& batch) {
  auto out = forward_logits(params, batch);
  for (auto& z : out) z = sigmoid(z);
  return out;
}

LossGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                       std::span<const double> sample_weights) {
  const auto& spec = params.layout()->spec();
  batch.validate(spec);
  if (!sample_weights.empty() && sample_weights.size() != batch.size())
    throw IndexError("loss_and_grad: weight vector length mismatch");

  const std::size_t n = batch.size();
  const auto e = static_cast<std::size_t>(spec.embed_dim);
  const std::size_t n_layers = spec.hidden.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossGrad result;
  result.grad = ParamVector(params.layout());
  Workspace ws(spec);

  auto grad_users = result.grad.block_span("user_table");
  auto grad_items = result.grad.block_span("item_table");
  const auto head_w = params.block_span("head_w");

  for (std::size_t s = 0; s < n; ++s) {
    load_input(params, batch.user_ids[s], batch.item_ids[s], ws);
    const double logit = forward_sample(spec, params, ws);
    const double y = batch.labels[s];
    const double w = sample_weights.empty() ? 1.0 : sample_weights[s];

    result.loss += w * (softplus(logit) - y * logit);
    const double dlogit = w * (sigmoid(logit) - y) * inv_n;

    // Head.
    auto gh_w = result.grad.block_span("head_w");
    auto gh_b = result.grad.block_span("head_b");
    const auto& top = ws.act[n_layers];
    auto& dtop = ws.delta[n_layers];
    for (std::size_t i = 0; i < top.size(); ++i) {
      gh_w[i] += top[i] * dlogit;
      dtop[i] = head_w[i] * dlogit;
    }
    gh_b[0] += dlogit;

    // Dense layers, last to first.
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto w_blk = params.block_span("dense" + std::to_string(l) + "_w");
      auto gw = result.grad.block_span("dense" + std::to_string(l) + "_w");
      auto gb = result.grad.block_span("dense" + std::to_string(l) + "_b");
      const std::size_t in = ws.dims[l];
      const std::size_t out = ws.dims[l + 1];
      auto& dz = ws.delta[l + 1];
      // Convert output delta to pre-activation delta in place.
      if (spec.activation == Activation::Relu) {
        for (std::size_t o = 0; o < out; ++o)
          if (ws.pre[l][o] <= 0.0) dz[o] = 0.0;
      } else {
        for (std::size_t o = 0; o < out; ++o) {
          const double t = ws.act[l + 1][o];
          dz[o] *= (1.0 - t * t);
        }
      }
      for (std::size_t o = 0; o < out; ++o) gb[o] += dz[o];
      const auto& z = ws.act[l];
      auto& dprev = ws.delta[l];
      for (std::size_t i = 0; i < in; ++i) {
        const double* wrow = w_blk.data() + i * out;
        double* gwrow = gw.data() + i * out;
        const double zi = z[i];
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
          gwrow[o] += zi * dz[o];
          acc += wrow[o] * dz[o];
        }
        dprev[i] = acc;
      }
    }

    // Split the input delta back into the two embedding rows.
    const auto& dx = ws.delta[0];
    double* gu = grad_users.data() + static_cast<std::size_t>(batch.user_ids[s]) * e;
    double* gv = grad_items.data() + static_cast<std::size_t>(batch.item_ids[s]) * e;
    for (std::size_t i = 0; i < e; ++i) {
      gu[i] += dx[i];
      gv[i] += dx[e + i];
    }
  }

  result.loss *= inv_n;
  if (!std::isfinite(result.loss) || !result.grad.all_finite())
    throw DivergenceError("loss_and_grad: non-finite loss or gradient");
  return result;
}

double loss_only(const ParamVector& params, const Batch& batch,
                 std::span<const double> sample_weights) {
  const auto& spec = params.layout()->spec();
  batch.validate(spec);
  if (!sample_weights.empty() && sample_weights.size() != batch.size())
    throw IndexError("loss_only: weight vector length mismatch");
  const auto logits = forward_logits(params, batch);
  double loss = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const double w = sample_weights.empty() ? 1.0 : sample_weights[s];
    loss += w * (softplus(logits[s]) - batch.labels[s] * logits[s]);
  }
  // Same reciprocal multiply as loss_and_grad, so the two agree bitwise.
  loss *= 1.0 / static_cast<double>(logits.size());
  if (!std::isfinite(loss)) throw DivergenceError("loss_only: non-finite loss");
  return loss;
}

ParamVector hvp(const ParamVector& params, const Batch& batch,
                const ParamVector& v, double eps) {
  return hvp_of(
      [&batch](const ParamVector& p) { return loss_and_grad(p, batch).grad; },
      params, v, eps);
}

}  // namespace mdopt
