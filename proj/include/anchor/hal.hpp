#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "anchor/learner.hpp"

namespace anchor {

/// A learned synthetic input whose predictions the anchoring step keeps fixed.
struct Anchor {
  std::vector<double> input;
  int label = 0;
  int task_id = 0;
  double embed_distance = 0.0;  // ||phi(e) - phi_t|| when the anchor was built
};

class AnchorSet {
 public:
  void add(Anchor a);
  std::size_t size() const { return anchors_.size(); }
  bool empty() const { return anchors_.empty(); }
  const std::vector<Anchor>& items() const { return anchors_; }
  /// All anchors as one batch (label, task id per row), in insertion order.
  const Batch& batch() const { return batch_; }

 private:
  std::vector<Anchor> anchors_;
  Batch batch_;
};

/// Running mean of phi over a task's stream:
/// phi_t <- beta * phi_t + (1 - beta) * mean_{x in B} phi(x).
class MeanEmbedding {
 public:
  MeanEmbedding(std::size_t dim, double beta);

  void update(const Network& net, const Batch& batch);
  void reset();
  std::span<const double> value() const { return value_; }
  double beta() const { return beta_; }

 private:
  std::vector<double> value_;
  double beta_;
};

/// One epoch of SGD over a shuffled copy of the memory, batches of
/// `batch_size`. Returns theta_M; `net` is not modified.
Network finetune_on_memory(const Network& net, const RingMemory& memory, double lr,
                           std::size_t batch_size, Rng& rng);

struct AnchorSearch {
  double lr = 0.1;     // ascent rate
  double gamma = 0.1;  // mean-embedding strength
  std::size_t steps = 100;
};

/// l(f_M(e), y) - l(f_t(e), y) - gamma * ||phi_t(e) - phi_mean||^2, where
/// phi_t is the feature extractor of `theta_t`.
double anchor_objective(const Network& theta_t, const Network& theta_m,
                        std::span<const double> phi_mean, double gamma,
                        std::span<const double> e, int label, int task_id);

std::vector<double> anchor_objective_grad(const Network& theta_t, const Network& theta_m,
                                          std::span<const double> phi_mean, double gamma,
                                          std::span<const double> e, int label, int task_id);

/// Componentwise N(0.5, 0.25^2) clipped to [0, 1].
std::vector<double> init_anchor_input(std::size_t dim, Rng& rng);

/// One anchor per label: random init, then `steps` ascent steps on the
/// anchor objective. Results are not clipped.
std::vector<Anchor> learn_anchors(const Network& theta_t, const Network& theta_m,
                                  std::span<const double> phi_mean, int task_id,
                                  std::span<const int> labels, const AnchorSearch& search,
                                  Rng& init_rng);

/// Parameter vectors around the last anchoring update.
struct HalTrace {
  std::vector<double> theta_start;
  std::vector<double> theta_tilde;
  std::vector<double> theta_end;
  std::vector<double> targets;
};

/// Experience replay with the two-step anchoring update and anchors learned
/// in hindsight at the end of each task.
class HalLearner : public Learner {
 public:
  HalLearner(Network net, const HyperParams& hyper, std::uint64_t seed);

  std::string name() const override { return "hal"; }
  void begin_task(const TaskInfo& task) override;
  void end_task(const TaskInfo& task) override;

  const AnchorSet& anchors() const { return anchors_; }
  const MeanEmbedding& mean_embedding() const { return phi_; }

  void set_tracing(bool on) { tracing_ = on; }
  const HalTrace& last_trace() const { return trace_; }

 protected:
  void step(const Batch& batch) override;

 private:
  AnchorSet anchors_;
  MeanEmbedding phi_;
  bool tracing_ = false;
  HalTrace trace_;
};

}  // namespace anchor
