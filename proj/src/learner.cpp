#include "anchor/learner.hpp"

#include <cmath>
#include <stdexcept>

#include "anchor/hal.hpp"

namespace anchor {

void HyperParams::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (mem_per_class == 0) throw std::invalid_argument("mem_per_class must be at least 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be non-negative");
  if (cv_epochs == 0) throw std::invalid_argument("cv_epochs must be positive");
}

Learner::Learner(Network net, const HyperParams& hyper, std::uint64_t seed)
    : net_(std::move(net)),
      hyper_(hyper),
      memory_(net_.input_dim(), hyper.mem_per_class),
      replay_rng_(make_rng(seed, Stream::memory_sampling)),
      seed_(seed) {
  hyper_.validate();
}

void Learner::begin_task(const TaskInfo& task) { current_task_ = task.task_id; }

void Learner::end_task(const TaskInfo&) {}

void Learner::observe(const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("observe() needs a non-empty batch");
  step(batch);
  ++observe_calls_;
  examples_seen_ += batch.size();
}

Batch Learner::sample_replay() {
  std::optional<int> exclude;
  if (hyper_.exclude_current_task_from_replay) exclude = current_task_;
  return memory_.sample(hyper_.batch_size, replay_rng_, exclude);
}

void Finetune::step(const Batch& batch) {
  const auto lg = batch_loss_and_grad(net_, batch);
  sgd_update(net_, lg.grad, hyper_.lr);
}

void ErRing::step(const Batch& batch) {
  const Batch replay = sample_replay();
  const auto lg = batch_loss_and_grad(net_, replay.empty() ? batch : concat(batch, replay));
  sgd_update(net_, lg.grad, hyper_.lr);
  memory_.add(batch);
}

Gradient agem_project(const Gradient& g, const Gradient& g_ref) {
  const double d = g.dot(g_ref);
  if (d >= 0.0) return g;
  Gradient out = g;
  out.add_scaled(g_ref, -d / g_ref.dot(g_ref));
  return out;
}

void Agem::step(const Batch& batch) {
  auto lg = batch_loss_and_grad(net_, batch);
  const Batch replay = sample_replay();
  if (!replay.empty()) {
    const auto ref = batch_loss_and_grad(net_, replay);
    lg.grad = agem_project(lg.grad, ref.grad);
    min_ref_dot_ = std::min(min_ref_dot_, lg.grad.dot(ref.grad));
    ++projections_;
  }
  sgd_update(net_, lg.grad, hyper_.lr);
  memory_.add(batch);
}

std::unique_ptr<Learner> make_learner(const std::string& name, Network net,
                                      const HyperParams& hyper, std::uint64_t seed) {
  if (name == "finetune") return std::make_unique<Finetune>(std::move(net), hyper, seed);
  if (name == "er") return std::make_unique<ErRing>(std::move(net), hyper, seed);
  if (name == "agem") return std::make_unique<Agem>(std::move(net), hyper, seed);
  if (name == "hal") return std::make_unique<HalLearner>(std::move(net), hyper, seed);
  throw std::invalid_argument("unknown learner '" + name + "'");
}

}  // namespace anchor
