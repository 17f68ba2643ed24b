#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <random>
#include <vector>

#include "anchor/batch.hpp"
#include "anchor/network.hpp"
#include "anchor/rng.hpp"

namespace testing {

inline anchor::Batch random_batch(const anchor::Network& net, std::size_t n, anchor::Rng& rng) {
  anchor::Batch b(net.input_dim());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(net.input_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x) v = u(rng);
    const int task = static_cast<int>(rng() % net.heads().n_heads);
    const int label = static_cast<int>(rng() % net.head(task).size);
    b.push_back(x, label, task);
  }
  return b;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

}  // namespace testing

#include "anchor/data.hpp"
#include "anchor/learner.hpp"

namespace testing {

/// Feeds every evaluation task of `stream` to `learner` in order.
inline void run_stream(anchor::Learner& learner, anchor::TaskStream& stream,
                       std::size_t batch_size) {
  for (std::size_t t = stream.cv_tasks(); t < stream.size(); ++t) {
    const anchor::TaskInfo info{stream.task(t).task_id, stream.task(t).labels()};
    learner.begin_task(info);
    anchor::BatchReader r = stream.open_train(t, batch_size);
    while (auto b = r.next()) learner.observe(*b);
    learner.end_task(info);
  }
}

/// Small split stream over a 4-class synthetic set: two 2-class tasks.
inline anchor::TaskStream small_split_stream(std::uint64_t seed, std::size_t samples = 40) {
  static const anchor::Dataset data = anchor::make_synthetic(4, 16, 60, 20, 5);
  anchor::StreamOptions o;
  o.protocol = anchor::Protocol::split;
  o.n_tasks = 2;
  o.classes_per_task = 2;
  o.cv_tasks = 0;
  o.samples_per_task = samples;
  o.seed = seed;
  return anchor::build_task_stream(data, o);
}

}  // namespace testing
