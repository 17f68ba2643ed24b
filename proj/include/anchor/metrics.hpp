#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "anchor/data.hpp"
#include "anchor/network.hpp"

namespace anchor {

/// a[i][j]: test accuracy on task j after training through task i. Rows are
/// recorded whole; the first `eval_offset` tasks are cross-validation tasks
/// and never enter the statistics.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t n_tasks, std::size_t eval_offset = 0);

  std::size_t n_tasks() const { return rows_.size(); }
  std::size_t eval_offset() const { return eval_offset_; }

  /// Throws std::invalid_argument on a wrong row length or entries outside [0,1].
  void record_row(std::size_t i, std::vector<double> row);
  bool has_row(std::size_t i) const { return rows_.at(i).has_value(); }
  double at(std::size_t i, std::size_t j) const;
  const std::vector<double>& row(std::size_t i) const;

 private:
  std::size_t eval_offset_ = 0;
  std::vector<std::optional<std::vector<double>>> rows_;
};

/// Fraction of the task's test set whose argmax logit (ties to the lowest
/// index) equals the label.
double evaluate_task(const Network& net, const TaskData& task);

/// Mean of the final row over evaluated tasks.
double average_accuracy(const AccuracyMatrix& m);

struct ForgettingOptions {
  /// Take the max only over rows l >= j instead of every row before the last.
  bool max_from_row_j = false;
};

/// Mean over evaluated tasks j < T of max_l (a[l][j] - a[T][j]),
/// l ranging over evaluated rows before the last.
double max_forgetting(const AccuracyMatrix& m, ForgettingOptions opts = {});

/// Mean accuracy over tasks seen so far after each evaluated row.
std::vector<double> accuracy_evolution(const AccuracyMatrix& m);

}  // namespace anchor
