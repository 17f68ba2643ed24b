// anchorlab: run, tune, verify and summarize continual-learning experiments.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "anchor/harness.hpp"
#include "anchor/verification.hpp"

namespace {

using namespace anchor;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kConfig = 1, kData = 2, kVerify = 3 };

int cmd_run(const fs::path& config, const std::vector<std::string>& sets) {
  const ExperimentConfig cfg = load_config(config, sets);
  const Dataset data = load_dataset(cfg.dataset);
  std::vector<RunResult> runs;
  for (std::uint64_t seed : cfg.seeds) {
    RunResult r = run_single(cfg, data, seed);
    const auto path = write_result(r, cfg.output_dir / result_filename(cfg, seed));
    std::printf("seed %llu  acc %.4f  forgetting %.4f  %.1fs  -> %s\n",
                static_cast<unsigned long long>(seed), r.average_accuracy, r.max_forgetting,
                r.wall_time_seconds, path.c_str());
    runs.push_back(std::move(r));
  }
  const Summary s = aggregate(runs);
  std::printf("%s m=%zu: accuracy %.4f +- %.4f, forgetting %.4f +- %.4f over %zu seeds\n",
              s.method.c_str(), s.mem_per_class, s.accuracy_mean, s.accuracy_std,
              s.forgetting_mean, s.forgetting_std, s.seed_count);
  return kOk;
}

int cmd_grid(const fs::path& config, const fs::path& grid_path,
             const std::vector<std::string>& sets) {
  const ExperimentConfig cfg = load_config(config, sets);
  std::ifstream in(grid_path);
  if (!in) throw ConfigError("cannot open grid " + grid_path.string());
  const Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("grid " + grid_path.string() + " is not valid JSON");
  const Grid grid = parse_grid(doc);
  const Dataset data = load_dataset(cfg.dataset);
  const GridResult res = grid_search(cfg, data, grid);

  fs::create_directories(cfg.output_dir);
  std::ofstream csv(cfg.output_dir / ("grid_" + cfg.learner + ".csv"));
  csv << "lr,lambda,gamma,mem_per_class,score\n";
  for (const auto& p : res.points) {
    csv << p.hyper.lr << ',' << p.hyper.lambda << ',' << p.hyper.gamma << ','
        << p.hyper.mem_per_class << ',' << p.score << '\n';
  }
  std::printf("best: lr=%g lambda=%g gamma=%g mem_per_class=%zu  cv accuracy %.4f (%zu points)\n",
              res.best.lr, res.best.lambda, res.best.gamma, res.best.mem_per_class,
              res.best_score, res.points.size());
  return kOk;
}

int cmd_verify(std::size_t seeds, const fs::path& out) {
  const std::vector<double> alphas{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  const SuiteReport rep = run_verification_suite(50, seeds, alphas);

  Json doc;
  doc["gradients"] = {{"param_max_rel_error", rep.params.max_rel_error},
                      {"param_checked", rep.params.checked},
                      {"param_skipped_at_kinks", rep.params.skipped},
                      {"input_max_rel_error", rep.inputs.max_rel_error},
                      {"input_checked", rep.inputs.checked},
                      {"input_skipped_at_kinks", rep.inputs.skipped},
                      {"pass", rep.gradients_pass}};
  Json hv = Json::array();
  for (const auto& h : rep.hvp)
    hv.push_back({{"quadratic", h.quadratic_rel_error},
                  {"symmetry", h.symmetry_rel_error},
                  {"linearity", h.linearity_rel_error}});
  doc["hvp"] = {{"checks", hv}, {"pass", rep.hvp_pass}};
  Json sweeps = Json::array();
  for (const auto& t : rep.sweeps)
    sweeps.push_back({{"alphas", t.alphas},
                      {"residuals", t.residuals},
                      {"g_anc_norms", t.g_anc_norms},
                      {"orders", t.orders},
                      {"pattern_changed", t.pattern_changed},
                      {"mean_order", t.mean_order},
                      {"pass", t.pass}});
  doc["taylor"] = {{"sweeps", sweeps}, {"mean_order", rep.mean_order}, {"pass", rep.taylor_pass}};
  doc["pass"] = rep.pass();

  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << doc.dump(2) << '\n';

  std::printf("gradients   %s  max rel error params %.2e (%zu coords), inputs %.2e (%zu coords)\n",
              rep.gradients_pass ? "ok  " : "FAIL", rep.params.max_rel_error, rep.params.checked,
              rep.inputs.max_rel_error, rep.inputs.checked);
  std::printf("hvp         %s\n", rep.hvp_pass ? "ok  " : "FAIL");
  std::printf("taylor      %s  mean order %.3f over %zu seeds\n", rep.taylor_pass ? "ok  " : "FAIL",
              rep.mean_order, rep.sweeps.size());
  std::printf("report written to %s\n", out.c_str());
  return rep.pass() ? kOk : kVerify;
}

int cmd_report(const fs::path& dir) {
  const auto summaries = report_directory(dir);
  std::printf("%-9s %4s %5s %9s %9s %10s %9s\n", "method", "mem", "seeds", "acc", "acc_std",
              "forget", "fgt_std");
  for (const auto& s : summaries)
    std::printf("%-9s %4zu %5zu %9.4f %9.4f %10.4f %9.4f\n", s.method.c_str(), s.mem_per_class,
                s.seed_count, s.accuracy_mean, s.accuracy_std, s.forgetting_mean,
                s.forgetting_std);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning experiment runner"};
  app.require_subcommand(1);

  fs::path config, grid, dir, out;
  std::vector<std::string> sets;
  std::size_t seeds = 20;

  auto* run = app.add_subcommand("run", "train every configured seed and write results");
  run->add_option("--config", config, "experiment JSON")->required();
  run->add_option("--set", sets, "override, e.g. hyper.lambda=0.3");

  auto* gridc = app.add_subcommand("grid", "grid search on the cross-validation tasks");
  gridc->add_option("--config", config, "experiment JSON")->required();
  gridc->add_option("--grid", grid, "JSON object of name -> value list")->required();
  gridc->add_option("--set", sets, "override, e.g. learner=hal");

  auto* verify = app.add_subcommand("verify", "gradient checks and expansion-order sweep");
  verify->add_option("--seeds", seeds, "random problems for the sweep");
  verify->add_option("--out", out, "report path")->default_val("verification.json");

  auto* report = app.add_subcommand("report", "aggregate run files in a directory");
  report->add_option("--dir", dir, "results directory")->required();

  auto* fixtures = app.add_subcommand("fixtures", "write the small IDX test files");
  fixtures->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, sets);
    if (*gridc) return cmd_grid(config, grid, sets);
    if (*verify) return cmd_verify(seeds, out);
    if (*report) return cmd_report(dir);
    if (*fixtures) {
      for (const auto& p : write_idx_fixtures(out)) std::printf("%s\n", p.c_str());
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  }
  return kOk;
}
