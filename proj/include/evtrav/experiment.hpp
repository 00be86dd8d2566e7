#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "evtrav/planner.hpp"

namespace evtrav
{

/// One benchmark configuration expressed as model flags.
struct MethodSpec
{
  std::string name;
  PosteriorPrior posterior_prior = PosteriorPrior::physics;
  EvidenceSource evidence = EvidenceSource::flow;
  bool physics_regularizer = true;
  /// n_phys override; zero keeps the configured value.
  double prior_evidence = 0;
};

/// Learned configurations, in report order.
const std::vector<MethodSpec>& learned_methods();
const MethodSpec& find_method(const std::string& name);
EvidentialConfig method_config(const EvidentialConfig& base, const MethodSpec& m, std::uint64_t seed);

/// Non-learned references evaluated next to the learned methods.
inline const std::string kPhysicsPriorMethod = "physics_prior";
inline const std::string kUniformPriorMethod = "uniform_prior";
/// Navigation method names.
inline const std::string kNavLearned = "physics_evidential";
inline const std::string kNavOodAvoid = "uniform_evidential_ood";

/// Every constant the pipeline uses; loaded from JSON with per-field defaults.
struct ExperimentConfig
{
  std::vector<std::uint64_t> train_maps{1000, 1001};
  std::vector<std::uint64_t> val_maps{1002, 1003};
  std::vector<std::uint64_t> test_maps{1004, 1005};
  double train_scale = 1.0;
  double test_scale = 2.0;
  TerrainGenConfig terrain;

  int episodes_per_map = 10;
  std::uint64_t collect_seed = 5;
  CollectConfig collect;
  GroundTruthConfig truth;
  double split_percentile = 50.0;

  EvidentialConfig model = default_model();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> methods;

  /// Far-OOD probes for the fallback measurement.
  double probe_scale = 4.0;
  std::uint64_t probe_map = 2000;
  int probe_poses = 2000;
  double probe_factor = 4.0;
  /// Unevenness bin edges for the error table, in multiples of the ID threshold.
  std::vector<double> unevenness_edges{0, 0.5, 1, 2, 3, 4, 6, 8};

  std::vector<double> alphas{0.4, 0.6, 0.8};
  int pairs_per_map = 5;
  double pair_min_distance = 10.0;
  double pair_max_distance = 15.0;
  double pair_margin = 3.0;
  std::uint64_t pair_seed = 7;
  int n_yaw = 8;
  NavConfig nav;
  double ood_weight = 5.0;

  RobotParams robot;

  static EvidentialConfig default_model();
  void validate() const;
  std::vector<std::string> learned_method_names() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
/// Applies a JSON object on top of `base`; unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text, const ExperimentConfig& base = {});
std::string experiment_config_json(const ExperimentConfig& cfg);

/// Artifact layout under one working directory.
struct Workspace
{
  std::filesystem::path root;

  std::filesystem::path map_file(std::uint64_t seed) const;
  std::filesystem::path pool_file(const std::string& which) const;
  std::filesystem::path split_file() const;
  std::filesystem::path checkpoint_file(const std::string& method, std::uint64_t seed) const;
  std::filesystem::path curves_file(const std::string& method, std::uint64_t seed) const;
  std::filesystem::path result_file(const std::string& name) const;
};

struct MapSummary
{
  std::uint64_t seed = 0;
  double scale = 1;
  double elevation_std = 0;
  /// Mean magnitude of the finite-difference elevation gradient.
  double mean_grade = 0;
  double veg_fraction = 0;
};
MapSummary summarize_map(const TerrainMap& map);

/// Writes map_<seed>.txt for seeds seed..seed+n-1 plus maps_summary.csv.
std::vector<MapSummary> generate_map_files(std::uint64_t seed, int n, double scale, const TerrainGenConfig& terrain,
                                           const std::filesystem::path& out_dir);

/// Stage progress lines on std::clog; on by default.
bool& pipeline_progress();

/// Pipeline stages. Each reads only the artifacts of earlier stages.
void stage_gen_maps(const ExperimentConfig& cfg, const Workspace& ws);
void stage_collect(const ExperimentConfig& cfg, const Workspace& ws);
/// Empty `methods` or `seeds` selects every configured one.
void stage_train(const ExperimentConfig& cfg, const Workspace& ws, std::vector<std::string> methods = {},
                 std::vector<std::uint64_t> seeds = {});
void stage_eval_learning(const ExperimentConfig& cfg, const Workspace& ws);
void stage_bench_nav(const ExperimentConfig& cfg, const Workspace& ws);
void stage_report(const Workspace& ws);
/// Called after each stage with its name and wall time in seconds.
using StageTimer = std::function<void(const std::string&, double)>;
void run_pipeline(const ExperimentConfig& cfg, const Workspace& ws, const StageTimer& on_stage = {});

/// Split reloaded from the collect stage.
DatasetSplit load_split(const Workspace& ws);

/// Minimal CSV reader for the files this module writes.
struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace evtrav
