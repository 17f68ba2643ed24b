#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "anchor/batch.hpp"
#include "anchor/memory.hpp"
#include "anchor/network.hpp"
#include "anchor/rng.hpp"

namespace anchor {

/// How the anchoring penalty combines anchors: a plain sum, or the sum
/// divided by the number of anchors.
enum class AnchorWeighting { sum, mean };

struct HyperParams {
  double lr = 0.1;
  std::size_t batch_size = 10;
  std::size_t mem_per_class = 1;
  // HAL only
  double lambda = 0.1;
  double gamma = 0.1;
  double beta = 0.5;
  std::size_t anchor_steps = 100;
  AnchorWeighting anchor_weighting = AnchorWeighting::sum;
  // protocol
  std::size_t cv_tasks = 3;
  std::size_t cv_epochs = 1;
  bool exclude_current_task_from_replay = false;

  /// Throws std::invalid_argument when a value is out of its domain.
  void validate() const;
};

struct TaskInfo {
  int task_id = 0;
  std::vector<int> labels;  // head-local labels of the task
};

/// A continual learner consuming a stream of batches, each exactly once.
/// observe() is the only mutation entry point during training.
class Learner {
 public:
  Learner(Network net, const HyperParams& hyper, std::uint64_t seed);
  virtual ~Learner() = default;

  virtual std::string name() const = 0;
  virtual void begin_task(const TaskInfo& task);
  /// Applies exactly one parameter update for `batch`.
  void observe(const Batch& batch);
  virtual void end_task(const TaskInfo& task);

  const Network& net() const { return net_; }
  const RingMemory& memory() const { return memory_; }
  const HyperParams& hyper() const { return hyper_; }
  std::size_t observe_calls() const { return observe_calls_; }
  std::size_t examples_seen() const { return examples_seen_; }

 protected:
  virtual void step(const Batch& batch) = 0;
  /// B_M: up to batch_size entries sampled from memory with the learner's
  /// own rng stream.
  Batch sample_replay();

  Network net_;
  HyperParams hyper_;
  RingMemory memory_;
  Rng replay_rng_;
  std::uint64_t seed_;
  int current_task_ = 0;

 private:
  std::size_t observe_calls_ = 0;
  std::size_t examples_seen_ = 0;
};

/// Plain SGD on the stream, no memory.
class Finetune : public Learner {
 public:
  using Learner::Learner;
  std::string name() const override { return "finetune"; }

 protected:
  void step(const Batch& batch) override;
};

/// Experience replay with a ring buffer: one SGD step on B u B_M, then B is
/// written to memory.
class ErRing : public Learner {
 public:
  using Learner::Learner;
  std::string name() const override { return "er"; }

 protected:
  void step(const Batch& batch) override;
};

/// g if <g, g_ref> >= 0, else g - (<g, g_ref> / <g_ref, g_ref>) g_ref.
Gradient agem_project(const Gradient& g, const Gradient& g_ref);

class Agem : public Learner {
 public:
  using Learner::Learner;
  std::string name() const override { return "agem"; }

  /// Smallest <g', g_ref> seen after projection (+inf before any projection).
  double min_reference_dot() const { return min_ref_dot_; }
  std::size_t projections() const { return projections_; }

 protected:
  void step(const Batch& batch) override;

 private:
  double min_ref_dot_ = std::numeric_limits<double>::infinity();
  std::size_t projections_ = 0;
};

/// "finetune", "er", "agem" or "hal".
std::unique_ptr<Learner> make_learner(const std::string& name, Network net,
                                      const HyperParams& hyper, std::uint64_t seed);

}  // namespace anchor
