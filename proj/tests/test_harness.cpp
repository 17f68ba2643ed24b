#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "anchor/harness.hpp"
#include "helpers.hpp"

using namespace anchor;
namespace fs = std::filesystem;

namespace {

Json synthetic_doc() {
  return Json::parse(R"({
    "dataset": {"kind": "synthetic", "n_classes": 4, "dim": 16,
                "train_per_class": 60, "test_per_class": 20, "seed": 3},
    "protocol": "permute",
    "n_tasks": 3,
    "samples_per_task": 60,
    "cv_tasks": 1,
    "hidden": [12],
    "learner": "finetune",
    "hyper": {"lr": 0.1, "mem_per_class": 1, "anchor_steps": 5},
    "seeds": [0]
  })");
}

ExperimentConfig synthetic_config(const std::string& learner) {
  Json d = synthetic_doc();
  d["learner"] = learner;
  return parse_config(d);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string without_wall_time(const std::string& s) {
  std::istringstream in(s);
  std::string line, out;
  while (std::getline(in, line))
    if (line.find("\"wall_time_seconds\"") == std::string::npos) out += line + '\n';
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anchorlab_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunResult fake_result(const ExperimentConfig& cfg, std::uint64_t seed, double acc,
                      std::vector<std::vector<double>> rows) {
  RunResult r;
  r.config = to_json(cfg);
  r.seed = seed;
  r.accuracy = AccuracyMatrix(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) r.accuracy.record_row(i, rows[i]);
  r.average_accuracy = acc;
  r.max_forgetting = 0.1;
  return r;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("defaults follow the published protocol") {
  const ExperimentConfig c = parse_config(Json::parse(R"({"dataset": {"dir": "x"}})"));
  CHECK(c.hyper.cv_tasks == 3);
  CHECK(c.hyper.batch_size == 10);
  CHECK(c.seeds.size() == 5);
  CHECK(c.n_tasks == 23);
  CHECK(c.samples_per_task == 1000);
  CHECK(c.hidden == std::vector<std::size_t>{256, 256});
  CHECK(c.hyper.anchor_steps == 100);
  CHECK(c.hyper.beta == 0.5);
}

TEST_CASE("config errors") {
  auto bad = [](const char* text) {
    CHECK_THROWS_AS(parse_config(Json::parse(text)), ConfigError);
  };
  bad(R"({"dataset": {"dir": "x"}, "typo": 1})");
  bad(R"({"dataset": {"dir": "x"}, "hyper": {"lamda": 1}})");
  bad(R"({"dataset": {"dir": "x"}, "learner": "ewc"})");
  bad(R"({"dataset": {"dir": "x"}, "n_tasks": 3, "cv_tasks": 3})");
  bad(R"({"dataset": {"dir": "x"}, "seeds": []})");
  bad(R"({"dataset": {"dir": "x"}, "hyper": {"lr": "fast"}})");
  bad(R"({"dataset": {"dir": "x"}, "hyper": {"beta": 2}})");
  bad(R"({"dataset": {"dir": "x"}, "protocol": "shuffle"})");
  bad(R"({"dataset": {"kind": "idx"}})");
  bad(R"({"dataset": {"kind": "csv", "dir": "x"}})");
}

TEST_CASE("overrides and json round trip") {
  Json d = synthetic_doc();
  apply_override(d, "hyper.lambda=0.3");
  apply_override(d, "learner=hal");
  apply_override(d, "flags.dump_anchors=true");
  apply_override(d, "hidden=[5,6]");
  const ExperimentConfig c = parse_config(d);
  CHECK(c.hyper.lambda == 0.3);
  CHECK(c.learner == "hal");
  CHECK(c.dump_anchors);
  CHECK(c.hidden == std::vector<std::size_t>{5, 6});
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));
  CHECK_THROWS(apply_override(d, "no_equals_sign"));
}

TEST_CASE("load_config resolves paths against the config file") {
  const fs::path dir = scratch("load");
  {
    std::ofstream out(dir / "c.json");
    out << R"({"dataset": {"dir": "data/mnist"}, "output_dir": "out"})";
  }
  const ExperimentConfig c = load_config(dir / "c.json", {"n_tasks=5"});
  CHECK(c.dataset.dir == dir / "data/mnist");
  CHECK(c.output_dir == dir / "out");
  CHECK(c.n_tasks == 5);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("finetune on a short synthetic stream yields a full matrix") {
  const ExperimentConfig cfg = synthetic_config("finetune");
  const RunResult r = run_single(cfg, 0);
  REQUIRE(r.accuracy.n_tasks() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(r.accuracy.at(i, j) >= 0.0);
      CHECK(r.accuracy.at(i, j) <= 1.0);
    }
  CHECK(r.examples_visited == std::vector<std::size_t>{60, 60});
  CHECK(r.average_accuracy == average_accuracy(r.accuracy));
}

TEST_CASE("identical config and seed write identical result files") {
  const fs::path dir = scratch("det");
  ExperimentConfig cfg = synthetic_config("hal");
  cfg.output_dir = dir;
  cfg.dump_anchors = true;
  const auto a = write_result(run_single(cfg, 4), dir / "a.json");
  const std::string dump_a = slurp(fs::path(read_result(a).anchors_path.value()));
  const auto b = write_result(run_single(cfg, 4), dir / "b.json");
  const std::string dump_b = slurp(fs::path(read_result(b).anchors_path.value()));
  CHECK(without_wall_time(slurp(a)) == without_wall_time(slurp(b)));
  CHECK(!dump_a.empty());
  CHECK(dump_a == dump_b);
  const auto c = write_result(run_single(cfg, 5), dir / "c.json");
  CHECK(without_wall_time(slurp(a)) != without_wall_time(slurp(c)));
}

TEST_CASE("HAL with lambda = 0 matches ER") {
  ExperimentConfig er = synthetic_config("er");
  ExperimentConfig hal = synthetic_config("hal");
  hal.hyper.lambda = 0.0;
  const RunResult a = run_single(er, 1);
  const RunResult b = run_single(hal, 1);
  CHECK(std::fabs(a.average_accuracy - b.average_accuracy) <= 1e-12);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a.accuracy.row(i) == b.accuracy.row(i));
}

TEST_CASE("grid search") {
  const ExperimentConfig cfg = synthetic_config("er");
  const Dataset data = load_dataset(cfg.dataset);
  SUBCASE("one point is returned as is") {
    const GridResult g = grid_search(cfg, data, parse_grid(Json::parse(R"({"lr": [0.05]})")));
    REQUIRE(g.points.size() == 1);
    CHECK(g.best.lr == 0.05);
    CHECK(g.best_score == g.points[0].score);
  }
  SUBCASE("cartesian order and argmax") {
    const GridResult g =
        grid_search(cfg, data, parse_grid(Json::parse(R"({"lr": [0.001, 0.1], "mem_per_class": [1, 2]})")));
    REQUIRE(g.points.size() == 4);
    CHECK(g.points[0].hyper.lr == 0.001);
    CHECK(g.points[1].hyper.mem_per_class == 2);
    CHECK(g.points[2].hyper.lr == 0.1);
    double best = -1.0;
    for (const auto& p : g.points) best = std::max(best, p.score);
    CHECK(g.best_score == best);
  }
  SUBCASE("ties keep the first point") {
    // lambda has no effect on ER
    const GridResult g = grid_search(cfg, data, parse_grid(Json::parse(R"({"lambda": [0.5, 0.1]})")));
    CHECK(g.points[0].score == g.points[1].score);
    CHECK(g.best.lambda == 0.5);
  }
  CHECK_THROWS_AS(parse_grid(Json::object()), ConfigError);
  CHECK_THROWS_AS(parse_grid(Json::parse(R"({"lr": []})")), ConfigError);
  HyperParams h;
  CHECK_THROWS(set_hyper(h, "momentum", 0.9));
}

TEST_CASE("aggregate") {
  const ExperimentConfig cfg = synthetic_config("er");
  const auto one = fake_result(cfg, 0, 0.7, {{0.5, 0.1}, {0.6, 0.8}});
  const Summary s1 = aggregate({one});
  CHECK(s1.accuracy_std == 0.0);
  CHECK(s1.seed_count == 1);
  const auto two = fake_result(cfg, 1, 0.8, {{0.7, 0.1}, {0.4, 0.6}});
  const Summary s = aggregate({one, two});
  CHECK(s.accuracy_mean == doctest::Approx(0.75));
  CHECK(s.accuracy_std == doctest::Approx(0.0707106781).epsilon(1e-8));
  CHECK(s.method == "er");
  CHECK(s.mem_per_class == 1);
  REQUIRE(s.evolution_mean.size() == 2);
  CHECK(s.evolution_mean[0] == doctest::Approx(0.6));
  CHECK(s.evolution_mean[1] == doctest::Approx((0.7 + 0.5) / 2));
  CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
  ExperimentConfig other = cfg;
  other.hyper.lr = 0.3;
  CHECK_THROWS_AS(aggregate({one, fake_result(other, 2, 0.6, {{0.5, 0.1}, {0.6, 0.8}})}),
                  std::invalid_argument);
  ExperimentConfig reseeded = cfg;
  reseeded.seeds = {7};
  CHECK_NOTHROW(aggregate({one, fake_result(reseeded, 7, 0.6, {{0.5, 0.1}, {0.6, 0.8}})}));
}

TEST_CASE("result files round-trip bitwise") {
  const fs::path dir = scratch("rt");
  const ExperimentConfig cfg = synthetic_config("er");
  RunResult r = fake_result(cfg, 3, 0.1 + 0.2, {{1.0 / 3.0, 2.0 / 7.0}, {0.1, std::nextafter(0.5, 1.0)}});
  r.max_forgetting = -1.0 / 9.0;
  r.anchors_path = "some/where.csv";
  const fs::path p = write_result(r, dir / "r.json");
  const RunResult back = read_result(p);
  CHECK(back.seed == 3);
  CHECK(back.config == r.config);
  CHECK(back.average_accuracy == r.average_accuracy);
  CHECK(back.max_forgetting == r.max_forgetting);
  CHECK(back.anchors_path == r.anchors_path);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(testing::bitwise_equal(back.accuracy.row(i), r.accuracy.row(i)));
  CHECK_THROWS_AS(read_result(dir / "nope.json"), std::runtime_error);
}

TEST_CASE("report writes one summary row per method and memory size") {
  const fs::path dir = scratch("report");
  ExperimentConfig er = synthetic_config("er");
  ExperimentConfig er3 = er;
  er3.hyper.mem_per_class = 3;
  ExperimentConfig hal = synthetic_config("hal");
  for (std::uint64_t s : {0u, 1u}) {
    write_result(fake_result(er, s, 0.5, {{0.5, 0.1}, {0.6, 0.4}}), dir / result_filename(er, s));
    write_result(fake_result(er3, s, 0.6, {{0.5, 0.1}, {0.6, 0.6}}), dir / result_filename(er3, s));
    write_result(fake_result(hal, s, 0.7, {{0.5, 0.1}, {0.7, 0.7}}), dir / result_filename(hal, s));
  }
  { std::ofstream(dir / "verification.json") << "{\"pass\": true}"; }
  const auto summaries = report_directory(dir);
  CHECK(summaries.size() == 3);
  std::ifstream csv(dir / "summary.csv");
  std::string header, line;
  std::getline(csv, header);
  CHECK(header == "method,mem_per_class,seed_count,accuracy_mean,accuracy_std,forgetting_mean,forgetting_std");
  std::size_t rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::ifstream evo(dir / "evolution_er_m1.csv");
  std::getline(evo, header);
  rows = 0;
  while (std::getline(evo, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  CHECK(fs::exists(dir / "memory_sweep.csv"));
}

}
