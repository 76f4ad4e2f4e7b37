#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mdopt/error.hpp"

namespace mdopt {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Architecture of the CTR model: two embedding tables feeding an MLP with
/// a scalar sigmoid head. The parameter layout is a pure function of this.
struct ModelSpec {
  std::int64_t num_users = 0;
  std::int64_t num_items = 0;
  std::int64_t embed_dim = 16;
  std::vector<std::int64_t> hidden = {64, 32};
  Activation activation = Activation::Relu;
  std::int64_t seed = 0;

  void validate() const;
  std::size_t param_count() const;
  bool operator==(const ModelSpec&) const = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

// Named index ranges into the flat parameter vector. Immutable and shared
// between every vector derived from the same ModelSpec.
class ParamLayout {
 public:
  static std::shared_ptr<const ParamLayout> make(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  const ParamBlock& block(const std::string& name) const;

  bool operator==(const ParamLayout& other) const {
    return spec_ == other.spec_;
  }

 private:
  ModelSpec spec_;
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

/// Flat parameter storage. Carries the full model state (or a gradient, or a
/// delta — anything living in the model's parameter space).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(LayoutPtr layout)
      : layout_(std::move(layout)), values_(layout_->total(), 0.0) {}

  ParamVector zeros_like() const { return ParamVector(layout_); }

  const LayoutPtr& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<double> block_span(const std::string& name);
  std::span<const double> block_span(const std::string& name) const;

  // In-place arithmetic. All of it is exact elementwise work and preserves
  // the layout by construction.
  ParamVector& add_(const ParamVector& other);
  ParamVector& sub_(const ParamVector& other);
  ParamVector& scale_(double s);
  ParamVector& axpy_(double a, const ParamVector& x);  // this += a*x

  bool same_layout(const ParamVector& other) const;
  void require_same_layout(const ParamVector& other, const char* op) const;

  bool all_finite() const;

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& v);
ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& a, double s);

/// Eq-style elementwise merge of shared and domain-specific parameters.
ParamVector combine(const ParamVector& shared, const ParamVector& specific);

/// One minibatch of (user, item, clicked) rows.
struct Batch {
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
  std::vector<double> labels;  // 0 or 1

  std::size_t size() const { return user_ids.size(); }
  void validate(const ModelSpec& spec) const;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Fan-in-scaled uniform weights, zero biases. Deterministic per seed.
ParamVector init_params(const ModelSpec& spec, std::uint64_t rng_seed);

/// Per-sample click probabilities sigmoid(logit).
std::vector<double> forward(const ParamVector& params, const Batch& batch);

/// Raw pre-sigmoid outputs; used for numerically stable loss evaluation.
std::vector<double> forward_logits(const ParamVector& params, const Batch& batch);

/// Mean binary cross-entropy over the batch and its exact gradient with
/// respect to every parameter. Embedding rows the batch never touches get
/// zero gradient. `sample_weights`, when non-empty, scales each sample's
/// loss term (used by the weighted-loss trainer); weight 1 reproduces the
/// unweighted path bit-for-bit.
LossGrad loss_and_grad(const ParamVector& params, const Batch& batch,
                       std::span<const double> sample_weights = {});

/// Mean BCE without the gradient.
double loss_only(const ParamVector& params, const Batch& batch,
                 std::span<const double> sample_weights = {});

// Numerically stable binary cross-entropy of one logit against y in {0,1}.
double bce_from_logit(double logit, double y);

/// Symmetric finite-difference Hessian-vector product of an arbitrary
/// gradient field: (grad(p + eps*v) - grad(p - eps*v)) / (2*eps).
template <typename GradFn>
ParamVector hvp_of(const GradFn& grad_fn, const ParamVector& params,
                   const ParamVector& v, double eps) {
  if (eps <= 0.0) throw ConfigError("hvp: eps must be positive");
  params.require_same_layout(v, "hvp");
  if (norm(v) == 0.0) throw ConfigError("hvp: direction vector must be nonzero");
  ParamVector plus = params;
  plus.axpy_(eps, v);
  ParamVector minus = params;
  minus.axpy_(-eps, v);
  ParamVector out = grad_fn(plus);
  out.sub_(grad_fn(minus));
  out.scale_(1.0 / (2.0 * eps));
  if (!out.all_finite())
    throw DivergenceError("hvp: non-finite result");
  return out;
}

/// H*v for the batch loss, via finite differences of the exact gradient.
ParamVector hvp(const ParamVector& params, const Batch& batch,
                const ParamVector& v, double eps);

}  // namespace mdopt
