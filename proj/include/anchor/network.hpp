#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "anchor/batch.hpp"

namespace anchor {

enum class HeadMode { single, multi };

/// How the output layer is shared between tasks. Single-head networks ignore
/// task ids; multi-head networks split the output into `n_heads` contiguous
/// slices of equal width, slice t belonging to task t.
struct HeadLayout {
  HeadMode mode = HeadMode::single;
  std::size_t n_heads = 1;

  static HeadLayout single() { return {}; }
  static HeadLayout multi(std::size_t n) { return {HeadMode::multi, n}; }

  bool operator==(const HeadLayout&) const = default;
};

struct HeadSlice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Offsets of each layer's weights and biases inside a flat parameter vector.
/// Layer l maps sizes[l] inputs to sizes[l+1] outputs; its (out x in) weight
/// matrix comes first, then its bias.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t n_layers() const { return sizes_.size() - 1; }
  std::size_t in(std::size_t l) const { return sizes_[l]; }
  std::size_t out(std::size_t l) const { return sizes_[l + 1]; }
  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return offsets_[l] + in(l) * out(l); }
  std::size_t size() const { return offsets_.back(); }

  bool operator==(const ParamLayout& o) const { return sizes_ == o.sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
};

/// Parameter-shaped vector: gradients, update directions, HVP probes.
class Gradient {
 public:
  Gradient() = default;
  explicit Gradient(ParamLayout layout);
  Gradient(ParamLayout layout, std::vector<double> values);

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> weights(std::size_t l);
  std::span<double> bias(std::size_t l);
  std::span<const double> weights(std::size_t l) const;
  std::span<const double> bias(std::size_t l) const;

  Gradient& operator+=(const Gradient& o);
  Gradient& operator-=(const Gradient& o);
  Gradient& operator*=(double s);
  /// this += s * o
  Gradient& add_scaled(const Gradient& o, double s);

  double dot(const Gradient& o) const;
  double norm() const;

 private:
  void check_congruent(const Gradient& o) const;

  ParamLayout layout_;
  std::vector<double> values_;
};

/// Dense ReLU perceptron f = w o phi. The feature extractor phi is every layer
/// up to the last hidden activation; w is the final linear layer producing
/// logits. Parameters live in one flat vector laid out by ParamLayout.
class Network {
 public:
  Network() = default;
  /// All-zero parameters. Throws std::invalid_argument on fewer than two
  /// sizes, a zero size, or a multi-head layout that does not divide the
  /// output width.
  explicit Network(std::vector<std::size_t> layer_sizes,
                   HeadLayout heads = HeadLayout::single());

  const ParamLayout& layout() const { return layout_; }
  const HeadLayout& heads() const { return heads_; }
  std::size_t n_layers() const { return layout_.n_layers(); }
  std::size_t input_dim() const { return layout_.sizes().front(); }
  std::size_t output_dim() const { return layout_.sizes().back(); }
  /// Width of phi(x); equals the input width for a network without hidden layers.
  std::size_t embed_dim() const { return layout_.sizes()[n_layers() - 1]; }
  std::size_t param_count() const { return params_.size(); }

  /// Output slice read by `task_id`. Throws std::out_of_range for an unknown
  /// task in multi-head mode.
  HeadSlice head(int task_id) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> weights(std::size_t l);
  std::span<double> bias(std::size_t l);
  std::span<const double> weights(std::size_t l) const;
  std::span<const double> bias(std::size_t l) const;

  Gradient zero_gradient() const { return Gradient(layout_); }

  /// Bitwise equality of architecture and parameters.
  bool identical_to(const Network& o) const;

 private:
  ParamLayout layout_;
  HeadLayout heads_;
  std::vector<double> params_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
Network init_network(std::vector<std::size_t> layer_sizes, HeadLayout heads,
                     std::uint64_t seed);

/// Softmax cross-entropy with max subtraction.
double ce_loss(std::span<const double> logits, std::size_t label);

/// Logits of the head used by `task_id`.
std::vector<double> forward(const Network& net, std::span<const double> input,
                            int task_id);

/// Full-width logits for `rows` inputs stored row-major.
std::vector<double> forward_all(const Network& net, std::span<const double> inputs,
                                std::size_t rows);

/// phi(x): the last hidden activation.
std::vector<double> feature_embed(const Network& net, std::span<const double> input);

/// Row-major phi(x) for `rows` inputs.
std::vector<double> feature_embed_all(const Network& net,
                                      std::span<const double> inputs,
                                      std::size_t rows);

struct LossAndGrad {
  double loss = 0.0;
  Gradient grad;
};

/// Mean cross-entropy of a non-empty batch, each example read through its
/// own head, and its exact parameter gradient.
LossAndGrad batch_loss_and_grad(const Network& net, const Batch& batch);

/// Mean cross-entropy only.
double batch_loss(const Network& net, const Batch& batch);

/// d ce_loss(forward(net, x, task), label) / dx
std::vector<double> input_grad(const Network& net, std::span<const double> input,
                               std::size_t label, int task_id);

/// d ||phi(x) - center||^2 / dx
std::vector<double> embedding_distance_grad(const Network& net,
                                            std::span<const double> input,
                                            std::span<const double> center);

/// Returns net - lr * grad. Throws on shape mismatch or a negative/NaN rate.
Network sgd_step(const Network& net, const Gradient& grad, double lr);

/// In-place form of sgd_step.
void sgd_update(Network& net, const Gradient& grad, double lr);

/// Gradient over theta of sum_k (f(anchor)_k - target_k)^2 with the target
/// held constant.
Gradient embed_grad_l2(const Network& net, std::span<const double> anchor_input,
                       std::span<const double> target_logits, int task_id);

/// Batched form: sum over anchors of the squared logit distance to
/// `targets` (head-local logits concatenated in anchor order).
LossAndGrad anchor_l2_loss_and_grad(const Network& net, const Batch& anchors,
                                    std::span<const double> targets);

/// Head-local logits of every batch row, concatenated.
std::vector<double> head_logits(const Network& net, const Batch& batch);

}  // namespace anchor
