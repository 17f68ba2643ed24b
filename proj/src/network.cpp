#include "anchor/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>

#include "anchor/kernels.hpp"
#include "anchor/rng.hpp"
#include "backprop.hpp"

namespace anchor {

// ---------------------------------------------------------------- layout

ParamLayout::ParamLayout(std::vector<std::size_t> layer_sizes)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2)
    throw std::invalid_argument("network needs at least an input and an output size");
  if (std::find(sizes_.begin(), sizes_.end(), std::size_t{0}) != sizes_.end())
    throw std::invalid_argument("layer sizes must be positive");
  offsets_.assign(1, 0);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
    offsets_.push_back(offsets_.back() + sizes_[l] * sizes_[l + 1] + sizes_[l + 1]);
}

// -------------------------------------------------------------- gradient

Gradient::Gradient(ParamLayout layout)
    : layout_(std::move(layout)), values_(layout_.size(), 0.0) {}

Gradient::Gradient(ParamLayout layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size())
    throw std::invalid_argument("gradient: value count does not match layout");
}

std::span<double> Gradient::weights(std::size_t l) {
  return {values_.data() + layout_.weight_offset(l), layout_.in(l) * layout_.out(l)};
}
std::span<double> Gradient::bias(std::size_t l) {
  return {values_.data() + layout_.bias_offset(l), layout_.out(l)};
}
std::span<const double> Gradient::weights(std::size_t l) const {
  return {values_.data() + layout_.weight_offset(l), layout_.in(l) * layout_.out(l)};
}
std::span<const double> Gradient::bias(std::size_t l) const {
  return {values_.data() + layout_.bias_offset(l), layout_.out(l)};
}

void Gradient::check_congruent(const Gradient& o) const {
  if (!(layout_ == o.layout_)) throw std::invalid_argument("gradient shape mismatch");
}

Gradient& Gradient::operator+=(const Gradient& o) {
  check_congruent(o);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

Gradient& Gradient::operator-=(const Gradient& o) {
  check_congruent(o);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

Gradient& Gradient::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

Gradient& Gradient::add_scaled(const Gradient& o, double s) {
  check_congruent(o);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
  return *this;
}

double Gradient::dot(const Gradient& o) const {
  check_congruent(o);
  double acc = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) acc += values_[i] * o.values_[i];
  return acc;
}

double Gradient::norm() const { return std::sqrt(dot(*this)); }

// --------------------------------------------------------------- network

Network::Network(std::vector<std::size_t> layer_sizes, HeadLayout heads)
    : layout_(std::move(layer_sizes)), heads_(heads) {
  if (heads_.mode == HeadMode::multi &&
      (heads_.n_heads == 0 || output_dim() % heads_.n_heads != 0))
    throw std::invalid_argument("multi-head layout must split the output evenly");
  if (heads_.mode == HeadMode::single) heads_.n_heads = 1;
  params_.assign(layout_.size(), 0.0);
}

HeadSlice Network::head(int task_id) const {
  if (heads_.mode == HeadMode::single) return {0, output_dim()};
  if (task_id < 0 || static_cast<std::size_t>(task_id) >= heads_.n_heads)
    throw std::out_of_range("no output head for task " + std::to_string(task_id));
  const std::size_t width = output_dim() / heads_.n_heads;
  return {static_cast<std::size_t>(task_id) * width, width};
}

std::span<double> Network::weights(std::size_t l) {
  return {params_.data() + layout_.weight_offset(l), layout_.in(l) * layout_.out(l)};
}
std::span<double> Network::bias(std::size_t l) {
  return {params_.data() + layout_.bias_offset(l), layout_.out(l)};
}
std::span<const double> Network::weights(std::size_t l) const {
  return {params_.data() + layout_.weight_offset(l), layout_.in(l) * layout_.out(l)};
}
std::span<const double> Network::bias(std::size_t l) const {
  return {params_.data() + layout_.bias_offset(l), layout_.out(l)};
}

bool Network::identical_to(const Network& o) const {
  return layout_ == o.layout_ && heads_ == o.heads_ &&
         params_.size() == o.params_.size() &&
         std::memcmp(params_.data(), o.params_.data(), params_.size() * sizeof(double)) == 0;
}

Network init_network(std::vector<std::size_t> layer_sizes, HeadLayout heads,
                     std::uint64_t seed) {
  Network net(std::move(layer_sizes), heads);
  Rng rng(seed);
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layout().in(l)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : net.weights(l)) w = dist(rng);
  }
  return net;
}

// ------------------------------------------------------- forward/backward

namespace detail {

void forward_cached(const Network& net, std::span<const double> inputs,
                    std::size_t rows, ForwardCache& cache) {
  const auto& lay = net.layout();
  if (inputs.size() != rows * net.input_dim())
    throw std::invalid_argument("input width does not match the network");
  const std::size_t layers = lay.n_layers();
  cache.rows = rows;
  cache.act.resize(layers + 1);
  cache.act[0].assign(inputs.begin(), inputs.end());
  for (std::size_t l = 0; l < layers; ++l) {
    auto& y = cache.act[l + 1];
    y.resize(rows * lay.out(l));
    kernels::affine_forward({rows, lay.in(l), lay.out(l)}, cache.act[l],
                            net.weights(l), net.bias(l), y);
    if (l + 1 < layers)
      for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
}

void backward(const Network& net, const ForwardCache& cache, std::size_t from,
              std::vector<double> upstream, Gradient* grad,
              std::vector<double>* dinput) {
  const auto& lay = net.layout();
  const std::size_t layers = lay.n_layers();
  const std::size_t rows = cache.rows;
  std::vector<double> next;
  for (std::size_t l = from; l-- > 0;) {
    // upstream holds d/d act[l+1]; hidden outputs pass through the ReLU mask.
    if (l + 1 < layers) {
      const auto& a = cache.act[l + 1];
      for (std::size_t i = 0; i < upstream.size(); ++i)
        if (!(a[i] > 0.0)) upstream[i] = 0.0;
    }
    const kernels::DenseDims dims{rows, lay.in(l), lay.out(l)};
    if (grad)
      kernels::affine_backward_params(dims, upstream, cache.act[l], grad->weights(l),
                                      grad->bias(l));
    if (l == 0 && !dinput) break;
    next.resize(rows * lay.in(l));
    kernels::affine_backward_input(dims, upstream, net.weights(l), next);
    upstream.swap(next);
  }
  if (dinput) *dinput = std::move(upstream);
}

}  // namespace detail

namespace {

void check_input(const Network& net, std::span<const double> input) {
  if (input.size() != net.input_dim())
    throw std::invalid_argument("input has " + std::to_string(input.size()) +
                                " values, network expects " +
                                std::to_string(net.input_dim()));
}

/// Softmax of `logits` into `probs`, returns the cross-entropy for `label`.
double softmax_ce(std::span<const double> logits, std::size_t label,
                  std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - mx);
    sum += probs[k];
  }
  for (double& p : probs) p /= sum;
  return std::log(sum) - (logits[label] - mx);
}

void check_label(std::size_t label, std::size_t n) {
  if (label >= n)
    throw std::out_of_range("label " + std::to_string(label) + " outside a head of " +
                            std::to_string(n) + " classes");
}

}  // namespace

double ce_loss(std::span<const double> logits, std::size_t label) {
  check_label(label, logits.size());
  std::vector<double> probs(logits.size());
  return softmax_ce(logits, label, probs);
}

std::vector<double> forward_all(const Network& net, std::span<const double> inputs,
                                std::size_t rows) {
  detail::ForwardCache cache;
  detail::forward_cached(net, inputs, rows, cache);
  return std::move(cache.act.back());
}

std::vector<double> forward(const Network& net, std::span<const double> input,
                            int task_id) {
  check_input(net, input);
  const HeadSlice h = net.head(task_id);
  auto all = forward_all(net, input, 1);
  return {all.begin() + static_cast<std::ptrdiff_t>(h.offset),
          all.begin() + static_cast<std::ptrdiff_t>(h.offset + h.size)};
}

std::vector<double> feature_embed_all(const Network& net,
                                      std::span<const double> inputs,
                                      std::size_t rows) {
  if (inputs.size() != rows * net.input_dim())
    throw std::invalid_argument("input width does not match the network");
  const auto& lay = net.layout();
  std::vector<double> cur(inputs.begin(), inputs.end());
  std::vector<double> next;
  for (std::size_t l = 0; l + 1 < lay.n_layers(); ++l) {
    next.resize(rows * lay.out(l));
    kernels::affine_forward({rows, lay.in(l), lay.out(l)}, cur, net.weights(l),
                            net.bias(l), next);
    for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur.swap(next);
  }
  return cur;
}

std::vector<double> feature_embed(const Network& net, std::span<const double> input) {
  check_input(net, input);
  return feature_embed_all(net, input, 1);
}

namespace {

/// Fills the gradient of the mean batch cross-entropy w.r.t. the logits and
/// returns the mean loss.
double ce_logit_grad(const Network& net, const Batch& batch,
                     std::span<const double> logits, std::vector<double>& dlogits) {
  const std::size_t out = net.output_dim();
  const std::size_t n = batch.size();
  dlogits.assign(n * out, 0.0);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const HeadSlice h = net.head(batch.task_ids[r]);
    if (batch.labels[r] < 0) throw std::out_of_range("negative label");
    const auto label = static_cast<std::size_t>(batch.labels[r]);
    check_label(label, h.size);
    std::span<const double> z = logits.subspan(r * out + h.offset, h.size);
    std::span<double> d(dlogits.data() + r * out + h.offset, h.size);
    total += softmax_ce(z, label, d);
    d[label] -= 1.0;
    for (double& v : d) v *= scale;
  }
  return total * scale;
}

void check_batch(const Network& net, const Batch& batch) {
  batch.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (batch.dim != net.input_dim())
    throw std::invalid_argument("batch input width does not match the network");
}

}  // namespace

LossAndGrad batch_loss_and_grad(const Network& net, const Batch& batch) {
  check_batch(net, batch);
  detail::ForwardCache cache;
  detail::forward_cached(net, batch.inputs, batch.size(), cache);
  std::vector<double> dlogits;
  LossAndGrad out{ce_logit_grad(net, batch, cache.act.back(), dlogits),
                  net.zero_gradient()};
  detail::backward(net, cache, net.n_layers(), std::move(dlogits), &out.grad, nullptr);
  return out;
}

double batch_loss(const Network& net, const Batch& batch) {
  check_batch(net, batch);
  const auto logits = forward_all(net, batch.inputs, batch.size());
  std::vector<double> dlogits;
  return ce_logit_grad(net, batch, logits, dlogits);
}

std::vector<double> input_grad(const Network& net, std::span<const double> input,
                               std::size_t label, int task_id) {
  check_input(net, input);
  const HeadSlice h = net.head(task_id);
  check_label(label, h.size);
  detail::ForwardCache cache;
  detail::forward_cached(net, input, 1, cache);
  std::vector<double> dlogits(net.output_dim(), 0.0);
  std::span<double> d(dlogits.data() + h.offset, h.size);
  softmax_ce(std::span<const double>(cache.act.back()).subspan(h.offset, h.size), label, d);
  d[label] -= 1.0;
  std::vector<double> dx;
  detail::backward(net, cache, net.n_layers(), std::move(dlogits), nullptr, &dx);
  return dx;
}

std::vector<double> embedding_distance_grad(const Network& net,
                                            std::span<const double> input,
                                            std::span<const double> center) {
  check_input(net, input);
  if (center.size() != net.embed_dim())
    throw std::invalid_argument("embedding center has the wrong width");
  const std::size_t depth = net.n_layers() - 1;
  if (depth == 0) {
    std::vector<double> dx(input.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = 2.0 * (input[i] - center[i]);
    return dx;
  }
  detail::ForwardCache cache;
  detail::forward_cached(net, input, 1, cache);
  const auto& phi = cache.act[depth];
  std::vector<double> up(phi.size());
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = 2.0 * (phi[i] - center[i]);
  std::vector<double> dx;
  detail::backward(net, cache, depth, std::move(up), nullptr, &dx);
  return dx;
}

void sgd_update(Network& net, const Gradient& grad, double lr) {
  if (!(net.layout() == grad.layout()))
    throw std::invalid_argument("gradient shape does not match the network");
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  auto p = net.params();
  auto g = grad.values();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

Network sgd_step(const Network& net, const Gradient& grad, double lr) {
  Network out = net;
  sgd_update(out, grad, lr);
  return out;
}

std::vector<double> head_logits(const Network& net, const Batch& batch) {
  batch.validate();
  if (batch.empty()) return {};
  const auto all = forward_all(net, batch.inputs, batch.size());
  const std::size_t out = net.output_dim();
  std::vector<double> res;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const HeadSlice h = net.head(batch.task_ids[r]);
    res.insert(res.end(), all.begin() + static_cast<std::ptrdiff_t>(r * out + h.offset),
               all.begin() + static_cast<std::ptrdiff_t>(r * out + h.offset + h.size));
  }
  return res;
}

LossAndGrad anchor_l2_loss_and_grad(const Network& net, const Batch& anchors,
                                    std::span<const double> targets) {
  anchors.validate();
  LossAndGrad out{0.0, net.zero_gradient()};
  if (anchors.empty()) return out;
  detail::ForwardCache cache;
  detail::forward_cached(net, anchors.inputs, anchors.size(), cache);
  const std::size_t width = net.output_dim();
  const auto& logits = cache.act.back();
  std::vector<double> dlogits(anchors.size() * width, 0.0);
  std::size_t t = 0;
  for (std::size_t r = 0; r < anchors.size(); ++r) {
    const HeadSlice h = net.head(anchors.task_ids[r]);
    if (t + h.size > targets.size())
      throw std::invalid_argument("anchor targets are shorter than the anchor heads");
    for (std::size_t k = 0; k < h.size; ++k, ++t) {
      const double diff = logits[r * width + h.offset + k] - targets[t];
      out.loss += diff * diff;
      dlogits[r * width + h.offset + k] = 2.0 * diff;
    }
  }
  if (t != targets.size())
    throw std::invalid_argument("anchor targets do not match the anchor heads");
  detail::backward(net, cache, net.n_layers(), std::move(dlogits), &out.grad, nullptr);
  return out;
}

Gradient embed_grad_l2(const Network& net, std::span<const double> anchor_input,
                       std::span<const double> target_logits, int task_id) {
  check_input(net, anchor_input);
  if (target_logits.size() != net.head(task_id).size)
    throw std::invalid_argument("target logits do not match the head width");
  Batch one(net.input_dim());
  one.push_back(anchor_input, 0, task_id);
  return anchor_l2_loss_and_grad(net, one, target_logits).grad;
}

}  // namespace anchor
