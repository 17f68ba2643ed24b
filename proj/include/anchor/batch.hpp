#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace anchor {

/// A set of (input, label, task) triplets with inputs stored row-major.
struct Batch {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<int> labels;
  std::vector<int> task_ids;

  Batch() = default;
  explicit Batch(std::size_t input_dim) : dim(input_dim) {}

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * dim, dim};
  }

  void reserve(std::size_t n) {
    inputs.reserve(n * dim);
    labels.reserve(n);
    task_ids.reserve(n);
  }

  void push_back(std::span<const double> x, int label, int task_id);
  void append(const Batch& other);

  /// Throws std::invalid_argument unless the three sequences agree in length.
  void validate() const;
};

/// B u B_M, in that order.
Batch concat(const Batch& a, const Batch& b);

}  // namespace anchor
