#include "anchor/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "anchor/hal.hpp"
#include "anchor/rng.hpp"

namespace anchor {
namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

namespace {

void reject_unknown(const Json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + where + "." + k + "'");
}

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.kind == DatasetSpec::Kind::idx && dataset.dir.empty())
    throw ConfigError("dataset.dir is required for idx datasets");
  if (n_tasks == 0) throw ConfigError("n_tasks must be positive");
  if (hyper.cv_tasks >= n_tasks) throw ConfigError("cv_tasks must be smaller than n_tasks");
  if (samples_per_task == 0) throw ConfigError("samples_per_task must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (learner != "finetune" && learner != "er" && learner != "agem" && learner != "hal")
    throw ConfigError("unknown learner '" + learner + "'");
  for (std::size_t w : hidden)
    if (w == 0) throw ConfigError("hidden widths must be positive");
  try {
    hyper.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(const Json& doc) {
  ExperimentConfig c;
  reject_unknown(doc,
                 {"dataset", "protocol", "n_tasks", "samples_per_task", "classes_per_task",
                  "cv_tasks", "hidden", "learner", "hyper", "seeds", "output_dir", "flags"},
                 "config");
  if (doc.contains("dataset")) {
    const Json& d = doc["dataset"];
    reject_unknown(d, {"kind", "dir", "n_classes", "dim", "train_per_class", "test_per_class", "seed"},
                   "dataset");
    std::string kind = "idx";
    read(d, "kind", kind, "dataset");
    if (kind == "idx") c.dataset.kind = DatasetSpec::Kind::idx;
    else if (kind == "synthetic") c.dataset.kind = DatasetSpec::Kind::synthetic;
    else throw ConfigError("dataset.kind must be 'idx' or 'synthetic'");
    std::string dir;
    read(d, "dir", dir, "dataset");
    c.dataset.dir = dir;
    read(d, "n_classes", c.dataset.n_classes, "dataset");
    read(d, "dim", c.dataset.dim, "dataset");
    read(d, "train_per_class", c.dataset.train_per_class, "dataset");
    read(d, "test_per_class", c.dataset.test_per_class, "dataset");
    read(d, "seed", c.dataset.seed, "dataset");
  }
  std::string protocol = to_string(c.protocol);
  read(doc, "protocol", protocol, "config");
  try {
    c.protocol = parse_protocol(protocol);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  read(doc, "n_tasks", c.n_tasks, "config");
  read(doc, "samples_per_task", c.samples_per_task, "config");
  read(doc, "classes_per_task", c.classes_per_task, "config");
  read(doc, "cv_tasks", c.hyper.cv_tasks, "config");
  read(doc, "hidden", c.hidden, "config");
  read(doc, "learner", c.learner, "config");
  if (doc.contains("hyper")) {
    const Json& h = doc["hyper"];
    reject_unknown(h, {"lr", "batch_size", "mem_per_class", "lambda", "gamma", "beta",
                       "anchor_steps", "anchor_weighting", "cv_epochs"},
                   "hyper");
    read(h, "lr", c.hyper.lr, "hyper");
    read(h, "batch_size", c.hyper.batch_size, "hyper");
    read(h, "mem_per_class", c.hyper.mem_per_class, "hyper");
    read(h, "lambda", c.hyper.lambda, "hyper");
    read(h, "gamma", c.hyper.gamma, "hyper");
    read(h, "beta", c.hyper.beta, "hyper");
    read(h, "anchor_steps", c.hyper.anchor_steps, "hyper");
    read(h, "cv_epochs", c.hyper.cv_epochs, "hyper");
    std::string weighting = "sum";
    read(h, "anchor_weighting", weighting, "hyper");
    if (weighting == "sum") c.hyper.anchor_weighting = AnchorWeighting::sum;
    else if (weighting == "mean") c.hyper.anchor_weighting = AnchorWeighting::mean;
    else throw ConfigError("hyper.anchor_weighting must be 'sum' or 'mean'");
  }
  read(doc, "seeds", c.seeds, "config");
  std::string out = c.output_dir.string();
  read(doc, "output_dir", out, "config");
  c.output_dir = out;
  if (doc.contains("flags")) {
    const Json& f = doc["flags"];
    reject_unknown(f, {"exclude_current_task_from_replay", "forgetting_max_from_row_j", "dump_anchors"},
                   "flags");
    read(f, "exclude_current_task_from_replay", c.hyper.exclude_current_task_from_replay, "flags");
    read(f, "forgetting_max_from_row_j", c.forgetting_max_from_row_j, "flags");
    read(f, "dump_anchors", c.dump_anchors, "flags");
  }
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json d;
  if (c.dataset.kind == DatasetSpec::Kind::idx) {
    d["kind"] = "idx";
    d["dir"] = c.dataset.dir.string();
  } else {
    d["kind"] = "synthetic";
    d["n_classes"] = c.dataset.n_classes;
    d["dim"] = c.dataset.dim;
    d["train_per_class"] = c.dataset.train_per_class;
    d["test_per_class"] = c.dataset.test_per_class;
    d["seed"] = c.dataset.seed;
  }
  const HyperParams& h = c.hyper;
  Json doc;
  doc["dataset"] = d;
  doc["protocol"] = to_string(c.protocol);
  doc["n_tasks"] = c.n_tasks;
  doc["samples_per_task"] = c.samples_per_task;
  doc["classes_per_task"] = c.classes_per_task;
  doc["cv_tasks"] = h.cv_tasks;
  doc["hidden"] = c.hidden;
  doc["learner"] = c.learner;
  doc["hyper"] = {{"lr", h.lr},         {"batch_size", h.batch_size},
                  {"mem_per_class", h.mem_per_class}, {"lambda", h.lambda},
                  {"gamma", h.gamma},   {"beta", h.beta},
                  {"anchor_steps", h.anchor_steps},
                  {"anchor_weighting", h.anchor_weighting == AnchorWeighting::mean ? "mean" : "sum"},
                  {"cv_epochs", h.cv_epochs}};
  doc["seeds"] = c.seeds;
  doc["output_dir"] = c.output_dir.string();
  doc["flags"] = {{"exclude_current_task_from_replay", h.exclude_current_task_from_replay},
                  {"forgetting_max_from_row_j", c.forgetting_max_from_row_j},
                  {"dump_anchors", c.dump_anchors}};
  return doc;
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (!node->is_null() && !node->is_object())
      throw ConfigError("override key '" + key + "' descends into a non-object");
    start = dot + 1;
  }
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig cfg = parse_config(doc);
  if (cfg.dataset.kind == DatasetSpec::Kind::idx && cfg.dataset.dir.is_relative())
    cfg.dataset.dir = (path.parent_path() / cfg.dataset.dir).lexically_normal();
  if (cfg.output_dir.is_relative())
    cfg.output_dir = (path.parent_path() / cfg.output_dir).lexically_normal();
  return cfg;
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.kind == DatasetSpec::Kind::idx) return load_idx_dataset(spec.dir);
  try {
    return make_synthetic(spec.n_classes, spec.dim, spec.train_per_class, spec.test_per_class,
                          spec.seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

StreamOptions stream_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  StreamOptions o;
  o.protocol = cfg.protocol;
  o.n_tasks = cfg.n_tasks;
  o.samples_per_task = cfg.samples_per_task;
  o.classes_per_task = cfg.classes_per_task;
  o.cv_tasks = cfg.hyper.cv_tasks;
  o.seed = seed;
  return o;
}

// --------------------------------------------------------------------- run

namespace {

std::string num17(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite value in results");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::unique_ptr<Learner> fresh_learner(const ExperimentConfig& cfg, const TaskStream& stream,
                                       const HyperParams& hyper, std::uint64_t seed) {
  std::vector<std::size_t> sizes{stream.input_dim()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(stream.output_dim());
  Network net = init_network(sizes, stream.heads(), derive_seed(seed, Stream::init));
  return make_learner(cfg.learner, std::move(net), hyper, seed);
}

fs::path write_anchor_dump(const HalLearner& hal, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& items = hal.anchors().items();
  out << "task_id,label";
  const std::size_t dim = items.empty() ? 0 : items.front().input.size();
  for (std::size_t k = 0; k < dim; ++k) out << ",x" << k;
  out << '\n';
  for (const Anchor& a : items) {
    out << a.task_id << ',' << a.label;
    for (double v : a.input) out << ',' << num17(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
  return path;
}

}  // namespace

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return run_single(cfg, load_dataset(cfg.dataset), seed);
}

RunResult run_single(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TaskStream stream = build_task_stream(data, stream_options(cfg, seed));
  auto learner = fresh_learner(cfg, stream, cfg.hyper, seed);

  const std::size_t first = cfg.hyper.cv_tasks;
  const std::size_t n_eval = cfg.n_tasks - first;
  RunResult res;
  res.config = to_json(cfg);
  res.seed = seed;
  res.accuracy = AccuracyMatrix(n_eval);

  for (std::size_t i = 0; i < n_eval; ++i) {
    const TaskData& task = stream.task(first + i);
    const TaskInfo info{task.task_id, task.labels()};
    learner->begin_task(info);
    BatchReader reader = stream.open_train(first + i, cfg.hyper.batch_size);
    while (auto batch = reader.next()) learner->observe(*batch);
    learner->end_task(info);
    if (reader.visited() != cfg.samples_per_task)
      throw std::logic_error("task " + std::to_string(task.task_id) + " visited " +
                             std::to_string(reader.visited()) + " examples, expected " +
                             std::to_string(cfg.samples_per_task));
    res.examples_visited.push_back(reader.visited());

    std::vector<double> row(n_eval);
    for (std::size_t j = 0; j < n_eval; ++j) row[j] = evaluate_task(learner->net(), stream.task(first + j));
    res.accuracy.record_row(i, std::move(row));
  }

  res.average_accuracy = average_accuracy(res.accuracy);
  res.max_forgetting =
      n_eval >= 2 ? max_forgetting(res.accuracy, {cfg.forgetting_max_from_row_j}) : 0.0;
  if (cfg.dump_anchors) {
    if (const auto* hal = dynamic_cast<const HalLearner*>(learner.get())) {
      fs::create_directories(cfg.output_dir);
      fs::path p = cfg.output_dir / result_filename(cfg, seed);
      p.replace_extension(".anchors.csv");
      res.anchors_path = write_anchor_dump(*hal, p).string();
    }
  }
  res.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// -------------------------------------------------------------------- grid

Grid parse_grid(const Json& doc) {
  if (!doc.is_object() || doc.empty()) throw ConfigError("grid must be a non-empty object");
  Grid g;
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_array() || v.empty()) throw ConfigError("grid entry '" + k + "' must be a non-empty list");
    std::vector<double> vals;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("grid entry '" + k + "' must hold numbers");
      vals.push_back(x.get<double>());
    }
    g.emplace_back(k, std::move(vals));
  }
  return g;
}

void set_hyper(HyperParams& h, const std::string& name, double v) {
  auto count = [&] {
    if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError(name + " must be a non-negative integer");
    return static_cast<std::size_t>(v);
  };
  if (name == "lr") h.lr = v;
  else if (name == "lambda") h.lambda = v;
  else if (name == "gamma") h.gamma = v;
  else if (name == "beta") h.beta = v;
  else if (name == "mem_per_class") h.mem_per_class = count();
  else if (name == "anchor_steps") h.anchor_steps = count();
  else if (name == "batch_size") h.batch_size = count();
  else if (name == "cv_epochs") h.cv_epochs = count();
  else throw ConfigError("unknown grid hyperparameter '" + name + "'");
}

GridResult grid_search(const ExperimentConfig& cfg, const Dataset& data, const Grid& grid) {
  cfg.validate();
  if (grid.empty()) throw ConfigError("grid is empty");
  if (cfg.hyper.cv_tasks == 0) throw ConfigError("grid search needs cv_tasks > 0");
  const std::uint64_t seed = cfg.seeds.front();
  const TaskStream stream = build_task_stream(data, stream_options(cfg, seed));

  GridResult out;
  std::vector<std::size_t> idx(grid.size(), 0);
  bool have_best = false;
  while (true) {
    HyperParams h = cfg.hyper;
    for (std::size_t k = 0; k < grid.size(); ++k) set_hyper(h, grid[k].first, grid[k].second[idx[k]]);
    try {
      h.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }

    auto learner = fresh_learner(cfg, stream, h, seed);
    for (std::size_t t = 0; t < h.cv_tasks; ++t) {
      const TaskData& task = stream.task(t);
      const TaskInfo info{task.task_id, task.labels()};
      learner->begin_task(info);
      for (std::size_t e = 0; e < h.cv_epochs; ++e) {
        BatchReader reader = stream.open_cv_train(t, h.batch_size);
        while (auto batch = reader.next()) learner->observe(*batch);
      }
      learner->end_task(info);
    }
    double score = 0.0;
    for (std::size_t t = 0; t < h.cv_tasks; ++t) score += evaluate_task(learner->net(), stream.task(t));
    score /= static_cast<double>(h.cv_tasks);
    out.points.push_back({h, score});
    if (!have_best || score > out.best_score) {
      out.best = h;
      out.best_score = score;
      have_best = true;
    }

    // odometer, last key fastest
    std::size_t k = grid.size();
    while (k > 0) {
      --k;
      if (++idx[k] < grid[k].second.size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

// ----------------------------------------------------------------- results

namespace {

Json comparable(Json cfg) {
  cfg.erase("seeds");
  cfg.erase("output_dir");
  return cfg;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

Summary aggregate(const std::vector<RunResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate needs at least one result");
  const Json ref = comparable(results.front().config);
  for (const auto& r : results)
    if (comparable(r.config) != ref)
      throw std::invalid_argument("results come from different configurations");

  Summary s;
  s.method = ref.value("learner", std::string{});
  s.mem_per_class = ref.at("hyper").value("mem_per_class", std::size_t{0});
  s.seed_count = results.size();
  std::vector<double> acc, forg;
  std::vector<std::vector<double>> evo;
  for (const auto& r : results) {
    acc.push_back(r.average_accuracy);
    forg.push_back(r.max_forgetting);
    evo.push_back(accuracy_evolution(r.accuracy));
  }
  std::tie(s.accuracy_mean, s.accuracy_std) = mean_std(acc);
  std::tie(s.forgetting_mean, s.forgetting_std) = mean_std(forg);
  for (std::size_t i = 0; i < evo.front().size(); ++i) {
    std::vector<double> col;
    for (const auto& e : evo) col.push_back(e.at(i));
    const auto [m, sd] = mean_std(col);
    s.evolution_mean.push_back(m);
    s.evolution_std.push_back(sd);
  }
  return s;
}

std::string result_filename(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.learner + "_m" + std::to_string(cfg.hyper.mem_per_class) + "_seed" +
         std::to_string(seed) + ".json";
}

fs::path write_result(const RunResult& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  std::string cfg = r.config.dump(2);
  std::string indented;
  for (char c : cfg) {
    indented += c;
    if (c == '\n') indented += "  ";
  }
  out << "{\n  \"config\": " << indented << ",\n";
  out << "  \"seed\": " << r.seed << ",\n";
  out << "  \"accuracy_matrix\": [";
  for (std::size_t i = 0; i < r.accuracy.n_tasks(); ++i) {
    out << (i ? ",\n    [" : "\n    [");
    const auto& row = r.accuracy.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? ", " : "") << num17(row[j]);
    out << "]";
  }
  out << "\n  ],\n";
  out << "  \"average_accuracy\": " << num17(r.average_accuracy) << ",\n";
  out << "  \"max_forgetting\": " << num17(r.max_forgetting) << ",\n";
  out << "  \"wall_time_seconds\": " << num17(r.wall_time_seconds) << ",\n";
  out << "  \"anchors_path\": " << (r.anchors_path ? Json(*r.anchors_path).dump() : "null") << "\n}\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
  return path;
}

RunResult read_result(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw std::runtime_error(path.string() + " is not a result file");
  try {
    RunResult r;
    r.config = doc.at("config");
    r.seed = doc.at("seed").get<std::uint64_t>();
    const auto& m = doc.at("accuracy_matrix");
    r.accuracy = AccuracyMatrix(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) r.accuracy.record_row(i, m[i].get<std::vector<double>>());
    r.average_accuracy = doc.at("average_accuracy").get<double>();
    r.max_forgetting = doc.at("max_forgetting").get<double>();
    r.wall_time_seconds = doc.at("wall_time_seconds").get<double>();
    if (!doc.at("anchors_path").is_null()) r.anchors_path = doc["anchors_path"].get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<fs::path> write_summaries(const std::vector<Summary>& summaries, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  auto open = [&](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    paths.push_back(p);
    return out;
  };

  {
    auto out = open(dir / "summary.csv");
    out << "method,mem_per_class,seed_count,accuracy_mean,accuracy_std,forgetting_mean,forgetting_std\n";
    for (const auto& s : summaries)
      out << s.method << ',' << s.mem_per_class << ',' << s.seed_count << ',' << num17(s.accuracy_mean)
          << ',' << num17(s.accuracy_std) << ',' << num17(s.forgetting_mean) << ','
          << num17(s.forgetting_std) << '\n';
  }
  for (const auto& s : summaries) {
    auto out = open(dir / ("evolution_" + s.method + "_m" + std::to_string(s.mem_per_class) + ".csv"));
    out << "task,accuracy_mean,accuracy_std\n";
    for (std::size_t i = 0; i < s.evolution_mean.size(); ++i)
      out << i << ',' << num17(s.evolution_mean[i]) << ',' << num17(s.evolution_std[i]) << '\n';
  }
  {
    auto out = open(dir / "memory_sweep.csv");
    out << "method,mem_per_class,accuracy_mean,accuracy_std\n";
    auto sorted = summaries;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Summary& a, const Summary& b) {
      return std::tie(a.method, a.mem_per_class) < std::tie(b.method, b.mem_per_class);
    });
    for (const auto& s : sorted)
      out << s.method << ',' << s.mem_per_class << ',' << num17(s.accuracy_mean) << ','
          << num17(s.accuracy_std) << '\n';
  }
  return paths;
}

std::vector<Summary> report_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::map<std::pair<std::string, std::size_t>, std::vector<RunResult>> groups;
  for (const auto& f : files) {
    {
      // other JSON documents (verification reports, configs) are not runs
      std::ifstream in(f);
      const Json doc = Json::parse(in, nullptr, false);
      if (doc.is_discarded() || !doc.is_object() || !doc.contains("accuracy_matrix")) continue;
    }
    RunResult r = read_result(f);
    const std::string method = r.config.value("learner", std::string{});
    const std::size_t mem = r.config.at("hyper").value("mem_per_class", std::size_t{0});
    groups[{method, mem}].push_back(std::move(r));
  }
  if (groups.empty()) throw std::runtime_error("no result files in " + dir.string());
  std::vector<Summary> out;
  for (const auto& [key, runs] : groups) out.push_back(aggregate(runs));
  write_summaries(out, dir);
  return out;
}

}  // namespace anchor
