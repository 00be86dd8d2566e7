#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evtrav/experiment.hpp"

using namespace evtrav;

int main(int argc, char** argv)
{
  CLI::App app{"Evidential traversability learning and risk-aware navigation benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::string workdir = "work";
  std::size_t threads = 0;
  app.add_option("--config", config_path, "JSON experiment configuration (defaults apply to missing keys)")
      ->check(CLI::ExistingFile);
  app.add_option("--workdir", workdir, "Directory holding maps, data, models and results");
  app.add_option("--threads", threads, "Worker threads; 0 uses the hardware concurrency");
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress stage progress lines");

  std::uint64_t map_seed = 0;
  int map_count = 1;
  double map_scale = 1.0;
  std::string map_out = "maps";
  auto* gen = app.add_subcommand("gen-maps", "Generate maps for the configured splits, or a custom batch");
  auto* seed_opt = gen->add_option("--seed", map_seed, "First seed of a custom batch");
  gen->add_option("--n", map_count, "Maps in the custom batch")->check(CLI::PositiveNumber);
  gen->add_option("--scale", map_scale, "Terrain scale of the custom batch")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", map_out, "Output directory of the custom batch");

  auto* collect = app.add_subcommand("collect", "Drive episodes on the generated maps and split the data");

  std::vector<std::string> train_methods;
  std::vector<std::uint64_t> train_seeds;
  auto* train_cmd = app.add_subcommand("train", "Train the learned methods");
  train_cmd->add_option("--method", train_methods, "Method name (repeatable); default all");
  train_cmd->add_option("--seed", train_seeds, "Training seed (repeatable); default all configured");

  auto* eval = app.add_subcommand("eval-learning", "Prediction error tables and far-OOD fallback");
  auto* nav = app.add_subcommand("bench-nav", "Closed-loop navigation benchmark on the test maps");
  auto* report = app.add_subcommand("report", "Summarize the result CSVs into report.md");
  auto* run = app.add_subcommand("run", "Every stage in order");
  auto* print = app.add_subcommand("print-config", "Print the effective configuration as JSON");
  auto* methods = app.add_subcommand("list-methods", "Print the learned method names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0) {
      worker_count() = threads;
    }
    pipeline_progress() = !quiet;
    const ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
    cfg.validate();
    const Workspace ws{workdir};

    if (*gen) {
      if (*seed_opt) {
        generate_map_files(map_seed, map_count, map_scale, cfg.terrain, map_out);
      } else {
        stage_gen_maps(cfg, ws);
      }
    } else if (*collect) {
      stage_collect(cfg, ws);
    } else if (*train_cmd) {
      stage_train(cfg, ws, train_methods, train_seeds);
    } else if (*eval) {
      stage_eval_learning(cfg, ws);
    } else if (*nav) {
      stage_bench_nav(cfg, ws);
    } else if (*report) {
      stage_report(ws);
    } else if (*run) {
      run_pipeline(cfg, ws);
    } else if (*print) {
      std::cout << experiment_config_json(cfg);
    } else if (*methods) {
      for (const MethodSpec& m : learned_methods()) {
        std::cout << m.name << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
