#include <doctest.h>

#include <cmath>

#include "anchor/hal.hpp"
#include "helpers.hpp"

using namespace anchor;

namespace {

HyperParams hal_hyper(double lambda) {
  HyperParams h;
  h.lr = 0.1;
  h.batch_size = 10;
  h.mem_per_class = 3;
  h.lambda = lambda;
  h.gamma = 0.1;
  h.beta = 0.5;
  h.anchor_steps = 20;
  return h;
}

Network small_net(std::uint64_t seed = 0) {
  return init_network({16, 8, 4}, HeadLayout::multi(2), seed);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// HAL after the first task of a small split stream, anchors built.
struct AfterFirstTask {
  TaskStream stream;
  std::unique_ptr<HalLearner> hal;
};

AfterFirstTask after_first_task(double lambda) {
  AfterFirstTask s{testing::small_split_stream(3, 40), nullptr};
  s.hal = std::make_unique<HalLearner>(small_net(), hal_hyper(lambda), 7);
  const TaskInfo info{0, s.stream.task(0).labels()};
  s.hal->begin_task(info);
  BatchReader r = s.stream.open_train(0, 10);
  while (auto b = r.next()) s.hal->observe(*b);
  s.hal->end_task(info);
  s.hal->begin_task({1, s.stream.task(1).labels()});
  return s;
}

}  // namespace

TEST_SUITE("hal") {

TEST_CASE("running mean embedding examples") {
  // no hidden layer: phi is the input itself
  const Network net({2, 3});
  MeanEmbedding me(2, 0.5);
  Batch b(2);
  b.push_back(std::vector<double>{1, 3}, 0, 0);
  b.push_back(std::vector<double>{3, 5}, 0, 0);
  me.update(net, b);
  CHECK(me.value()[0] == 1.0);
  CHECK(me.value()[1] == 2.0);
  Batch z(2);
  z.push_back(std::vector<double>{0, 0}, 0, 0);
  me.update(net, z);
  CHECK(me.value()[0] == 0.5);
  CHECK(me.value()[1] == 1.0);
  me.reset();
  CHECK(me.value()[0] == 0.0);

  MeanEmbedding frozen(2, 1.0);
  for (int i = 0; i < 5; ++i) frozen.update(net, b);
  CHECK(frozen.value()[0] == 0.0);
  CHECK(frozen.value()[1] == 0.0);
  CHECK_THROWS_AS(MeanEmbedding(2, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(me.update(net, Batch(2)), std::invalid_argument);
}

TEST_CASE("lambda = 0 reproduces ER bitwise") {
  TaskStream a = testing::small_split_stream(4, 50);
  TaskStream b = testing::small_split_stream(4, 50);
  HalLearner hal(small_net(), hal_hyper(0.0), 13);
  ErRing er(small_net(), hal_hyper(0.0), 13);
  testing::run_stream(hal, a, 10);
  testing::run_stream(er, b, 10);
  CHECK(hal.anchors().size() == 4);
  CHECK(hal.net().identical_to(er.net()));
}

TEST_CASE("without past anchors a HAL step is an ER step") {
  TaskStream a = testing::small_split_stream(4, 50);
  HalLearner hal(small_net(), hal_hyper(5.0), 13);
  ErRing er(small_net(), hal_hyper(5.0), 13);
  hal.begin_task({0, a.task(0).labels()});
  er.begin_task({0, a.task(0).labels()});
  BatchReader r = a.open_train(0, 10);
  while (auto b = r.next()) {
    hal.observe(*b);
    er.observe(*b);
    CHECK(hal.net().identical_to(er.net()));
  }
}

TEST_CASE("anchored step starts from theta, not theta tilde") {
  auto s = after_first_task(0.5);
  HalLearner& hal = *s.hal;
  hal.set_tracing(true);
  BatchReader r = s.stream.open_train(1, 10);
  const auto b = r.next();
  const Network start = hal.net();
  hal.observe(*b);
  const HalTrace& tr = hal.last_trace();
  REQUIRE(tr.theta_tilde.size() == start.param_count());
  CHECK(testing::bitwise_equal(tr.theta_start, start.params()));

  Network tilde = start;
  std::copy(tr.theta_tilde.begin(), tr.theta_tilde.end(), tilde.params().begin());
  CHECK(testing::bitwise_equal(tr.targets, head_logits(tilde, hal.anchors().batch())));

  // theta_end = theta - lr (g + lambda * grad_anchor(theta)), g = (theta - theta~) / lr
  const auto l2 = anchor_l2_loss_and_grad(start, hal.anchors().batch(), tr.targets);
  CHECK(l2.grad.norm() > 0.0);
  double err = 0.0, err_tilde = 0.0;
  const auto l2_tilde = anchor_l2_loss_and_grad(tilde, hal.anchors().batch(), tr.targets);
  for (std::size_t i = 0; i < start.param_count(); ++i) {
    const double from_theta = tr.theta_tilde[i] - 0.1 * 0.5 * l2.grad.values()[i];
    const double from_tilde = tr.theta_tilde[i] - 0.1 * 0.5 * l2_tilde.grad.values()[i];
    err = std::max(err, std::fabs(from_theta - tr.theta_end[i]));
    err_tilde = std::max(err_tilde, std::fabs(from_tilde - tr.theta_end[i]));
  }
  CHECK(err < 1e-12);
  CHECK(err_tilde > 1e-9);
  CHECK(testing::bitwise_equal(tr.theta_end, hal.net().params()));
}

TEST_CASE("anchor targets are recomputed at every step") {
  auto s = after_first_task(0.5);
  s.hal->set_tracing(true);
  BatchReader r = s.stream.open_train(1, 10);
  s.hal->observe(*r.next());
  const auto first = s.hal->last_trace().targets;
  s.hal->observe(*r.next());
  const auto second = s.hal->last_trace().targets;
  REQUIRE(first.size() == second.size());
  CHECK(first != second);
  Network tilde = s.hal->net();
  const auto& tt = s.hal->last_trace().theta_tilde;
  std::copy(tt.begin(), tt.end(), tilde.params().begin());
  CHECK(second == head_logits(tilde, s.hal->anchors().batch()));
}

TEST_CASE("large lambda aligns the update with the anchor gradient") {
  double prev = 2.0;
  for (double lambda : {0.01, 1.0, 100.0, 1e4, 1e6}) {
    auto s = after_first_task(lambda);
    s.hal->set_tracing(true);
    BatchReader r = s.stream.open_train(1, 10);
    const Network start = s.hal->net();
    s.hal->observe(*r.next());
    const HalTrace& tr = s.hal->last_trace();
    const auto a = anchor_l2_loss_and_grad(start, s.hal->anchors().batch(), tr.targets).grad;
    double dot = 0.0, nu = 0.0;
    for (std::size_t i = 0; i < start.param_count(); ++i) {
      const double u = tr.theta_start[i] - tr.theta_end[i];
      dot += u * a.values()[i];
      nu += u * u;
    }
    const double gap = 1.0 - dot / (std::sqrt(nu) * a.norm());
    CHECK(gap <= prev);
    prev = gap;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("finetune_on_memory") {
  const Network net = small_net(1);
  Rng rng(1);
  RingMemory empty(16, 1);
  CHECK(finetune_on_memory(net, empty, 0.1, 10, rng).identical_to(net));

  TaskStream s = testing::small_split_stream(5, 40);
  RingMemory mem(16, 20);
  BatchReader r = s.open_train(0, 10);
  while (auto b = r.next()) mem.add(*b);
  const Network copy = net;
  const Batch all = mem.all();
  const double before = batch_loss(net, all);
  const Network tm = finetune_on_memory(net, mem, 0.05, 10, rng);
  CHECK(net.identical_to(copy));
  CHECK(batch_loss(tm, all) <= before);
  CHECK_FALSE(tm.identical_to(net));
}

TEST_CASE("learn_anchors special cases") {
  const Network t = small_net(2);
  const Network m = small_net(3);
  const std::vector<double> phi(8, 0.3);
  const std::vector<int> labels{0, 1};

  SUBCASE("k = 0 keeps the initialization") {
    Rng a(4), b(4);
    const auto anchors = learn_anchors(t, m, phi, 1, labels, {0.1, 0.1, 0}, a);
    REQUIRE(anchors.size() == 2);
    CHECK(anchors[0].input == init_anchor_input(16, b));
    CHECK(anchors[1].input == init_anchor_input(16, b));
    CHECK(anchors[1].label == 1);
    CHECK(anchors[1].task_id == 1);
  }
  SUBCASE("theta_M = theta_t and gamma = 0 leave anchors in place") {
    Rng a(4), b(4);
    const auto anchors = learn_anchors(t, t, phi, 0, labels, {0.1, 0.0, 50}, a);
    CHECK(anchors[0].input == init_anchor_input(16, b));
  }
  SUBCASE("a strong embedding pull moves anchors towards the mean") {
    Rng a(4), b(4);
    const auto anchors = learn_anchors(t, m, phi, 0, labels, {0.01, 10.0, 100}, a);
    for (const auto& an : anchors) {
      const auto init = init_anchor_input(16, b);
      CHECK(distance(feature_embed(t, an.input), phi) < distance(feature_embed(t, init), phi));
      CHECK(an.embed_distance == doctest::Approx(distance(feature_embed(t, an.input), phi)));
    }
  }
  SUBCASE("the objective does not decrease at a tenth of the rate") {
    Rng a(4);
    auto e = init_anchor_input(16, a);
    double prev = anchor_objective(t, m, phi, 0.1, e, 1, 0);
    for (int k = 0; k < 100; ++k) {
      const auto g = anchor_objective_grad(t, m, phi, 0.1, e, 1, 0);
      for (std::size_t i = 0; i < e.size(); ++i) e[i] += 0.01 * g[i];
      const double now = anchor_objective(t, m, phi, 0.1, e, 1, 0);
      CHECK(now >= prev - 1e-14);
      prev = now;
    }
  }
  Rng rng(1);
  CHECK_THROWS_AS(learn_anchors(t, Network({16, 4}), phi, 0, labels, {}, rng), std::invalid_argument);
}

TEST_CASE("anchor objective gradient matches central differences") {
  const Network t = small_net(2);
  const Network m = small_net(3);
  const std::vector<double> phi(8, 0.3);
  Rng rng(6);
  auto e = init_anchor_input(16, rng);
  const auto g = anchor_objective_grad(t, m, phi, 0.7, e, 1, 1);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double keep = e[i];
    e[i] = keep + 1e-6;
    const double up = anchor_objective(t, m, phi, 0.7, e, 1, 1);
    e[i] = keep - 1e-6;
    const double down = anchor_objective(t, m, phi, 0.7, e, 1, 1);
    e[i] = keep;
    CHECK(g[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("end_task adds one anchor per class and leaves theta alone") {
  TaskStream s = testing::small_split_stream(6, 30);
  HalLearner hal(small_net(), hal_hyper(0.1), 2);
  for (std::size_t t = 0; t < 2; ++t) {
    const TaskInfo info{static_cast<int>(t), s.task(t).labels()};
    hal.begin_task(info);
    BatchReader r = s.open_train(t, 10);
    while (auto b = r.next()) hal.observe(*b);
    const Network before = hal.net();
    CHECK(std::any_of(hal.mean_embedding().value().begin(), hal.mean_embedding().value().end(),
                      [](double v) { return v != 0.0; }));
    hal.end_task(info);
    CHECK(hal.net().identical_to(before));
    CHECK(hal.anchors().size() == 2 * (t + 1));
    for (const auto& a : hal.anchors().items()) {
      CHECK(a.input.size() == 16);
      CHECK(std::isfinite(a.embed_distance));
      for (double v : a.input) CHECK(std::isfinite(v));
    }
    for (double v : hal.mean_embedding().value()) CHECK(v == 0.0);
  }
  CHECK(hal.anchors().items()[2].task_id == 1);
}

TEST_CASE("ten-class tasks build ten anchors each") {
  const Dataset data = make_synthetic(10, 16, 20, 5, 1);
  StreamOptions o;
  o.n_tasks = 4;
  o.cv_tasks = 1;
  o.samples_per_task = 50;
  TaskStream s = build_task_stream(data, o);
  HyperParams h = hal_hyper(0.01);
  h.anchor_steps = 5;
  HalLearner hal(init_network({16, 8, 10}, HeadLayout::single(), 0), h, 0);
  testing::run_stream(hal, s, 10);
  CHECK(hal.anchors().size() == 10 * 3);
}

TEST_CASE("mean weighting divides the anchor term by the anchor count") {
  auto sum = after_first_task(0.4);
  HyperParams h = hal_hyper(0.2);
  h.anchor_weighting = AnchorWeighting::mean;
  // two anchors: lambda 0.4 summed equals lambda 0.8 averaged
  h.lambda = 0.8;
  AfterFirstTask mean{testing::small_split_stream(3, 40), std::make_unique<HalLearner>(small_net(), h, 7)};
  const TaskInfo info{0, mean.stream.task(0).labels()};
  mean.hal->begin_task(info);
  BatchReader r = mean.stream.open_train(0, 10);
  while (auto b = r.next()) mean.hal->observe(*b);
  mean.hal->end_task(info);
  mean.hal->begin_task({1, mean.stream.task(1).labels()});
  REQUIRE(mean.hal->anchors().size() == 2);

  BatchReader ra = sum.stream.open_train(1, 10);
  BatchReader rb = mean.stream.open_train(1, 10);
  const auto b = ra.next();
  sum.hal->observe(*b);
  mean.hal->observe(*rb.next());
  CHECK(testing::max_abs_diff(sum.hal->net().params(), mean.hal->net().params()) < 1e-15);
}

}
