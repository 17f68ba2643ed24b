#include <doctest.h>

#include "anchor/learner.hpp"
#include "helpers.hpp"

using namespace anchor;

namespace {

Gradient vec2(double a, double b) { return Gradient(ParamLayout({1, 1}), {a, b}); }

HyperParams small_hyper() {
  HyperParams h;
  h.lr = 0.1;
  h.batch_size = 10;
  h.mem_per_class = 5;
  return h;
}

}  // namespace

TEST_SUITE("learners") {

TEST_CASE("finetune observe equals one sgd step on the batch") {
  const Network net = init_network({16, 8, 4}, HeadLayout::single(), 3);
  Rng rng(1);
  const Batch b = testing::random_batch(net, 10, rng);
  Finetune ft(net, small_hyper(), 0);
  ft.observe(b);
  const Network expect = sgd_step(net, batch_loss_and_grad(net, b).grad, 0.1);
  CHECK(ft.net().identical_to(expect));
  CHECK(ft.observe_calls() == 1);
  CHECK(ft.examples_seen() == 10);
  CHECK(ft.memory().empty());
}

TEST_CASE("ER and A-GEM with empty memory match finetune") {
  const Network net = init_network({16, 8, 4}, HeadLayout::single(), 3);
  Rng rng(1);
  const Batch b = testing::random_batch(net, 10, rng);
  Finetune ft(net, small_hyper(), 0);
  ErRing er(net, small_hyper(), 0);
  Agem ag(net, small_hyper(), 0);
  ft.observe(b);
  er.observe(b);
  ag.observe(b);
  CHECK(er.net().identical_to(ft.net()));
  CHECK(ag.net().identical_to(ft.net()));
  CHECK(ag.projections() == 0);
  CHECK(er.memory().total_count() == std::min<std::size_t>(10, 4 * 5));
}

TEST_CASE("ER averages the loss over B and B_M equally") {
  const Network net = init_network({16, 8, 4}, HeadLayout::single(), 3);
  Rng rng(1);
  const Batch b1 = testing::random_batch(net, 10, rng);
  const Batch b2 = testing::random_batch(net, 10, rng);
  HyperParams h = small_hyper();
  h.mem_per_class = 100;
  ErRing er(net, h, 42);
  er.observe(b1);
  const Network after1 = er.net();

  RingMemory mirror(16, 100);
  mirror.add(b1);
  Rng replay_rng = make_rng(42, Stream::memory_sampling);
  const Batch bm = mirror.sample(10, replay_rng);
  REQUIRE(bm.size() == 10);
  const Batch u = concat(b2, bm);
  CHECK(u.size() == 20);
  er.observe(b2);
  CHECK(er.net().identical_to(sgd_step(after1, batch_loss_and_grad(after1, u).grad, 0.1)));
}

TEST_CASE("observe consumes exactly one batch per call") {
  TaskStream s = testing::small_split_stream(1, 45);
  ErRing er(init_network({16, 8, 4}, HeadLayout::multi(2), 0), small_hyper(), 0);
  testing::run_stream(er, s, 10);
  CHECK(er.observe_calls() == 2 * 5);  // ceil(45 / 10) per task
  CHECK(er.examples_seen() == 90);
  CHECK_THROWS_AS(er.observe(Batch(16)), std::invalid_argument);
}

TEST_CASE("agem_project examples") {
  CHECK(agem_project(vec2(1, 0), vec2(0, 1)).values()[0] == 1.0);
  CHECK(agem_project(vec2(1, 0), vec2(0, 1)).values()[1] == 0.0);
  const Gradient p = agem_project(vec2(-1, 1), vec2(1, 0));
  CHECK(p.values()[0] == 0.0);
  CHECK(p.values()[1] == 1.0);
  CHECK(p.dot(vec2(1, 0)) == 0.0);
  const Gradient z = agem_project(vec2(-2, 3), vec2(2, -3));
  CHECK(z.norm() < 1e-15);
  // zero reference keeps g
  CHECK(agem_project(vec2(-1, 1), vec2(0, 0)).values()[0] == -1.0);
}

TEST_CASE("projected gradient never opposes a random reference") {
  Rng rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Gradient g(ParamLayout({3, 2})), r(ParamLayout({3, 2}));
    for (double& v : g.values()) v = n(rng);
    for (double& v : r.values()) v = n(rng) * std::pow(10.0, trial % 7 - 3);
    CHECK(agem_project(g, r).dot(r) >= -1e-10 * r.norm() * g.norm());
  }
}

TEST_CASE("A-GEM keeps the reference dot non-negative along a stream") {
  TaskStream s = testing::small_split_stream(2, 60);
  Agem ag(init_network({16, 8, 4}, HeadLayout::multi(2), 0), small_hyper(), 0);
  testing::run_stream(ag, s, 10);
  CHECK(ag.projections() > 0);
  CHECK(ag.min_reference_dot() >= -1e-10);
}

TEST_CASE("make_learner and hyper-parameter validation") {
  const Network net({4, 2});
  for (const char* n : {"finetune", "er", "agem", "hal"})
    CHECK(make_learner(n, net, HyperParams{}, 0)->name() == n);
  CHECK_THROWS_AS(make_learner("ewc", net, HyperParams{}, 0), std::invalid_argument);
  HyperParams h;
  h.lr = 0.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.mem_per_class = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.beta = 1.5;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
}

}
