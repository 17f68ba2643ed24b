#include "anchor/hal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace anchor {

void AnchorSet::add(Anchor a) {
  if (batch_.dim == 0) batch_ = Batch(a.input.size());
  batch_.push_back(a.input, a.label, a.task_id);
  anchors_.push_back(std::move(a));
}

MeanEmbedding::MeanEmbedding(std::size_t dim, double beta) : value_(dim, 0.0), beta_(beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
}

void MeanEmbedding::update(const Network& net, const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("mean embedding needs a non-empty batch");
  const auto phi = feature_embed_all(net, batch.inputs, batch.size());
  const std::size_t d = value_.size();
  if (phi.size() != batch.size() * d) throw std::invalid_argument("embedding width mismatch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < d; ++k) {
    double m = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) m += phi[r * d + k];
    value_[k] = beta_ * value_[k] + (1.0 - beta_) * (m * inv);
  }
}

void MeanEmbedding::reset() { std::fill(value_.begin(), value_.end(), 0.0); }

Network finetune_on_memory(const Network& net, const RingMemory& memory, double lr,
                           std::size_t batch_size, Rng& rng) {
  Network theta = net;
  if (memory.empty()) return theta;
  const Batch all = memory.all();
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b(all.dim);
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i)
      b.push_back(all.input(order[i]), all.labels[order[i]], all.task_ids[order[i]]);
    sgd_update(theta, batch_loss_and_grad(theta, b).grad, lr);
  }
  return theta;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

}  // namespace

double anchor_objective(const Network& theta_t, const Network& theta_m,
                        std::span<const double> phi_mean, double gamma,
                        std::span<const double> e, int label, int task_id) {
  const auto y = static_cast<std::size_t>(label);
  const double forgetting = ce_loss(forward(theta_m, e, task_id), y) -
                            ce_loss(forward(theta_t, e, task_id), y);
  return forgetting - gamma * squared_distance(feature_embed(theta_t, e), phi_mean);
}

std::vector<double> anchor_objective_grad(const Network& theta_t, const Network& theta_m,
                                          std::span<const double> phi_mean, double gamma,
                                          std::span<const double> e, int label, int task_id) {
  const auto y = static_cast<std::size_t>(label);
  auto g = input_grad(theta_m, e, y, task_id);
  const auto g_t = input_grad(theta_t, e, y, task_id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= g_t[i];
  if (gamma != 0.0) {
    const auto g_phi = embedding_distance_grad(theta_t, e, phi_mean);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gamma * g_phi[i];
  }
  return g;
}

std::vector<double> init_anchor_input(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> dist(0.5, 0.25);
  std::vector<double> e(dim);
  for (double& v : e) v = std::clamp(dist(rng), 0.0, 1.0);
  return e;
}

std::vector<Anchor> learn_anchors(const Network& theta_t, const Network& theta_m,
                                  std::span<const double> phi_mean, int task_id,
                                  std::span<const int> labels, const AnchorSearch& search,
                                  Rng& init_rng) {
  if (!(theta_t.layout() == theta_m.layout()))
    throw std::invalid_argument("theta_t and theta_M must share an architecture");
  std::vector<Anchor> out;
  out.reserve(labels.size());
  for (int label : labels) {
    Anchor a;
    a.label = label;
    a.task_id = task_id;
    a.input = init_anchor_input(theta_t.input_dim(), init_rng);
    for (std::size_t k = 0; k < search.steps; ++k) {
      const auto g = anchor_objective_grad(theta_t, theta_m, phi_mean, search.gamma, a.input,
                                           label, task_id);
      for (std::size_t i = 0; i < g.size(); ++i) a.input[i] += search.lr * g[i];
    }
    a.embed_distance = std::sqrt(squared_distance(feature_embed(theta_t, a.input), phi_mean));
    out.push_back(std::move(a));
  }
  return out;
}

HalLearner::HalLearner(Network net, const HyperParams& hyper, std::uint64_t seed)
    : Learner(std::move(net), hyper, seed), phi_(net_.embed_dim(), hyper.beta) {}

void HalLearner::begin_task(const TaskInfo& task) {
  Learner::begin_task(task);
  phi_.reset();
}

void HalLearner::step(const Batch& batch) {
  const Batch replay = sample_replay();
  auto lg = batch_loss_and_grad(net_, replay.empty() ? batch : concat(batch, replay));
  if (tracing_) {
    trace_ = {};
    trace_.theta_start.assign(net_.params().begin(), net_.params().end());
  }
  if (!anchors_.empty()) {
    // theta~ from the plain replay step; targets f_theta~(e) are constants.
    const Network tilde = sgd_step(net_, lg.grad, hyper_.lr);
    const auto targets = head_logits(tilde, anchors_.batch());
    const auto l2 = anchor_l2_loss_and_grad(net_, anchors_.batch(), targets);
    if (hyper_.lambda != 0.0) {
      double w = hyper_.lambda;
      if (hyper_.anchor_weighting == AnchorWeighting::mean) w /= static_cast<double>(anchors_.size());
      lg.grad.add_scaled(l2.grad, w);
    }
    if (tracing_) {
      trace_.theta_tilde.assign(tilde.params().begin(), tilde.params().end());
      trace_.targets = targets;
    }
  }
  sgd_update(net_, lg.grad, hyper_.lr);
  if (tracing_) trace_.theta_end.assign(net_.params().begin(), net_.params().end());
  phi_.update(net_, batch);
  memory_.add(batch);
}

void HalLearner::end_task(const TaskInfo& task) {
  Rng ft_rng = make_rng(seed_, Stream::finetune_order, static_cast<std::uint64_t>(task.task_id));
  const Network theta_m =
      finetune_on_memory(net_, memory_, hyper_.lr, hyper_.batch_size, ft_rng);
  Rng init_rng = make_rng(seed_, Stream::anchor_init, static_cast<std::uint64_t>(task.task_id));
  const AnchorSearch search{hyper_.lr, hyper_.gamma, hyper_.anchor_steps};
  for (auto& a : learn_anchors(net_, theta_m, phi_.value(), task.task_id, task.labels, search,
                               init_rng))
    anchors_.add(std::move(a));
  phi_.reset();
}

}  // namespace anchor
