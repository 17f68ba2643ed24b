#include <doctest.h>

#include <array>
#include <cmath>

#include "anchor/memory.hpp"
#include "helpers.hpp"

using namespace anchor;

namespace {

Batch one(double v, int label, int task) {
  Batch b(2);
  const std::vector<double> x{v, -v};
  b.push_back(x, label, task);
  return b;
}

}  // namespace

TEST_SUITE("memory") {

TEST_CASE("slot of capacity 2 keeps the last two inserts") {
  RingMemory m(2, 2);
  for (double v : {1.0, 2.0, 3.0}) m.add(one(v, 4, 0));
  const auto* s = m.slot(0, 4);
  REQUIRE(s);
  REQUIRE(s->size() == 2);
  CHECK(s->front().input[0] == 2.0);
  CHECK(s->back().input[0] == 3.0);
  CHECK(m.total_count() == 2);
}

TEST_CASE("distinct slots never evict each other") {
  RingMemory m(2, 1);
  m.add(one(1.0, 0, 0));
  m.add(one(2.0, 1, 0));
  m.add(one(3.0, 0, 1));
  CHECK(m.slot_count() == 3);
  CHECK(m.slot(0, 0)->front().input[0] == 1.0);
  CHECK(m.slot(0, 1)->front().input[0] == 2.0);
  CHECK(m.slot(1, 0)->front().input[0] == 3.0);
  CHECK(m.total_count() == 3);
  CHECK(m.slot(2, 0) == nullptr);
}

TEST_CASE("capacity and FIFO order hold under random insertion sequences") {
  Rng rng(11);
  for (std::size_t cap : {1u, 2u, 5u}) {
    RingMemory m(2, cap);
    for (int i = 0; i < 500; ++i) {
      Batch b(2);
      const std::size_t n = 1 + rng() % 10;
      for (std::size_t k = 0; k < n; ++k) {
        const std::vector<double> x{static_cast<double>(i), static_cast<double>(k)};
        b.push_back(x, static_cast<int>(rng() % 3), static_cast<int>(rng() % 4));
      }
      m.add(b);
      std::size_t total = 0;
      for (const auto& [key, q] : m.slots()) {
        CHECK(q.size() <= cap);
        for (std::size_t j = 1; j < q.size(); ++j) CHECK(q[j - 1].seq < q[j].seq);
        total += q.size();
      }
      CHECK(total == m.total_count());
    }
  }
}

TEST_CASE("evicted entry is always the oldest of its slot") {
  RingMemory m(2, 3);
  std::vector<std::uint64_t> seen;
  for (int i = 0; i < 10; ++i) {
    m.add(one(i, 0, 0));
    const auto* s = m.slot(0, 0);
    // the slot is exactly the newest min(i+1, 3) inserts
    const std::size_t expect = std::min<std::size_t>(static_cast<std::size_t>(i) + 1, 3);
    REQUIRE(s->size() == expect);
    for (std::size_t k = 0; k < expect; ++k)
      CHECK(s->at(k).input[0] == static_cast<double>(i + 1 - static_cast<int>(expect) + static_cast<int>(k)));
  }
}

TEST_CASE("sampling an empty memory returns an empty batch") {
  RingMemory m(3, 1);
  Rng rng(1);
  const Rng before = rng;
  CHECK(m.sample(10, rng).empty());
  CHECK(rng == before);
}

TEST_CASE("sample size clamps to the stored count") {
  RingMemory m(2, 1);
  for (int c = 0; c < 4; ++c) m.add(one(c, c, 0));
  Rng rng(2);
  const Batch b = m.sample(10, rng);
  CHECK(b.size() == 4);
  std::vector<int> labels = b.labels;
  std::sort(labels.begin(), labels.end());
  CHECK(labels == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("identical rng state gives an identical sample") {
  RingMemory m(2, 2);
  for (int c = 0; c < 20; ++c) m.add(one(c, c % 7, c % 3));
  Rng a(5), b(5);
  CHECK(m.sample(6, a).inputs == m.sample(6, b).inputs);
}

TEST_CASE("single draws are uniform over five equally filled slots") {
  RingMemory m(2, 3);
  for (int c = 0; c < 5; ++c)
    for (int k = 0; k < 3; ++k) m.add(one(c, c, 0));
  Rng rng(2024);
  std::array<double, 5> counts{};
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) counts[static_cast<std::size_t>(m.sample(1, rng).labels[0])] += 1;
  const double expect = kDraws / 5.0;
  const double sigma = std::sqrt(kDraws * 0.2 * 0.8);
  double chi2 = 0.0;
  for (double c : counts) {
    CHECK(std::fabs(c - expect) < 3 * sigma);
    chi2 += (c - expect) * (c - expect) / expect;
  }
  CHECK(chi2 < 18.47);  // 0.999 quantile, 4 degrees of freedom
}

TEST_CASE("excluding the current task drops its entries from the sample") {
  RingMemory m(2, 5);
  for (int k = 0; k < 5; ++k) {
    m.add(one(k, 0, 0));
    m.add(one(k, 1, 1));
  }
  Rng rng(3);
  const Batch b = m.sample(10, rng, 1);
  CHECK(b.size() == 5);
  for (int t : b.task_ids) CHECK(t == 0);
}

TEST_CASE("a full permuted run with m=1 stores one example per class per task") {
  const Dataset data = make_synthetic(10, 16, 40, 5, 1);
  StreamOptions o;
  o.n_tasks = 6;
  o.cv_tasks = 1;
  o.samples_per_task = 200;
  TaskStream s = build_task_stream(data, o);
  HyperParams h;
  h.mem_per_class = 1;
  ErRing er(init_network({16, 8, 10}, HeadLayout::single(), 0), h, 0);
  testing::run_stream(er, s, 10);
  CHECK(er.memory().total_count() == 5 * 10);
}

}
