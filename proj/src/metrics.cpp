#include "anchor/metrics.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace anchor {

AccuracyMatrix::AccuracyMatrix(std::size_t n_tasks, std::size_t eval_offset)
    : eval_offset_(eval_offset), rows_(n_tasks) {
  if (eval_offset > n_tasks) throw std::invalid_argument("eval_offset exceeds the task count");
}

void AccuracyMatrix::record_row(std::size_t i, std::vector<double> row) {
  if (row.size() != n_tasks())
    throw std::invalid_argument("accuracy row has " + std::to_string(row.size()) +
                                " entries, expected " + std::to_string(n_tasks()));
  for (double v : row)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("accuracy outside [0, 1]");
  rows_.at(i) = std::move(row);
}

const std::vector<double>& AccuracyMatrix::row(std::size_t i) const {
  const auto& r = rows_.at(i);
  if (!r) throw std::out_of_range("accuracy row " + std::to_string(i) + " not recorded");
  return *r;
}

double AccuracyMatrix::at(std::size_t i, std::size_t j) const { return row(i).at(j); }

double evaluate_task(const Network& net, const TaskData& task) {
  const std::size_t n = task.test.size();
  if (n == 0) throw std::invalid_argument("task has an empty test set");
  const HeadSlice h = net.head(task.task_id);
  const std::size_t width = net.output_dim();
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t rows = std::min(kChunk, n - start);
    const auto logits = forward_all(
        net, std::span<const double>(task.test.inputs).subspan(start * task.test.dim, rows * task.test.dim),
        rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* z = logits.data() + r * width + h.offset;
      // max_element returns the first maximum
      const auto pred = static_cast<int>(std::max_element(z, z + h.size) - z);
      if (pred == task.test.labels[start + r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double average_accuracy(const AccuracyMatrix& m) {
  const std::size_t T = m.n_tasks();
  if (T == m.eval_offset()) throw std::invalid_argument("no evaluated tasks");
  const auto& last = m.row(T - 1);
  double sum = 0.0;
  for (std::size_t j = m.eval_offset(); j < T; ++j) sum += last[j];
  return sum / static_cast<double>(T - m.eval_offset());
}

double max_forgetting(const AccuracyMatrix& m, ForgettingOptions opts) {
  const std::size_t T = m.n_tasks();
  const std::size_t first = m.eval_offset();
  if (T < first + 2) throw std::invalid_argument("forgetting needs at least two evaluated tasks");
  const auto& last = m.row(T - 1);
  double sum = 0.0;
  for (std::size_t j = first; j + 1 < T; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = opts.max_from_row_j ? j : first; l + 1 < T; ++l)
      best = std::max(best, m.at(l, j) - last[j]);
    sum += best;
  }
  return sum / static_cast<double>(T - first - 1);
}

std::vector<double> accuracy_evolution(const AccuracyMatrix& m) {
  std::vector<double> out;
  for (std::size_t i = m.eval_offset(); i < m.n_tasks(); ++i) {
    if (!m.has_row(i)) break;
    const auto& r = m.row(i);
    double sum = 0.0;
    for (std::size_t j = m.eval_offset(); j <= i; ++j) sum += r[j];
    out.push_back(sum / static_cast<double>(i - m.eval_offset() + 1));
  }
  return out;
}

}  // namespace anchor
