#include "anchor/batch.hpp"

#include <stdexcept>

namespace anchor {

void Batch::push_back(std::span<const double> x, int label, int task_id) {
  if (x.size() != dim) throw std::invalid_argument("batch: input width mismatch");
  inputs.insert(inputs.end(), x.begin(), x.end());
  labels.push_back(label);
  task_ids.push_back(task_id);
}

void Batch::append(const Batch& other) {
  if (other.empty()) return;
  if (other.dim != dim) throw std::invalid_argument("batch: input width mismatch");
  inputs.insert(inputs.end(), other.inputs.begin(), other.inputs.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  task_ids.insert(task_ids.end(), other.task_ids.begin(), other.task_ids.end());
}

void Batch::validate() const {
  if (labels.size() != task_ids.size() || inputs.size() != labels.size() * dim)
    throw std::invalid_argument("batch: inputs, labels and task ids disagree in length");
}

Batch concat(const Batch& a, const Batch& b) {
  Batch out(a.dim);
  out.reserve(a.size() + b.size());
  out.append(a);
  out.append(b);
  return out;
}

}  // namespace anchor
