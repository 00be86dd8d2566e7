#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "evtrav/features.hpp"

namespace evtrav
{

/// Ground-truth laws. Traction means follow 1 - (x / x_max)^exponent, a
/// different curve from the linear physics prior, and are sampled from a Beta
/// of the given concentration. Attitude comes from a plane fit through the wheel
/// contact heights.
struct GroundTruthConfig
{
  double exponent = 1.5;
  double concentration = 20.0;
  double max_slope_linear = std::tan(30.0 * std::numbers::pi / 180.0);
  double max_slope_angular = std::tan(15.0 * std::numbers::pi / 180.0);
  double max_veg_height = 0.2;
  double attitude_noise = 0.01;
  /// Radius over which a wheel rests on the highest point, meters.
  double contact_radius = 0.15;
  bool noise = true;

  void validate() const;
};

/// Mean traction law for one parameter, averaged over the wheels.
double traction_mean(const FootprintSample& fp, const GroundTruthConfig& cfg, TravParam param);

/// Signed (roll, pitch) of the least-squares plane through the contact heights.
std::pair<double, double> contact_plane_attitude(const TerrainMap& map, const RobotState& state,
                                                 const RobotParams& params, const GroundTruthConfig& cfg);

TraversabilitySample ground_truth_traversability(const TerrainMap& map, const RobotState& state,
                                                 const RobotParams& params, const GroundTruthConfig& cfg,
                                                 std::mt19937_64& rng);

struct CollectConfig
{
  double speed = 2.0;
  double steer_amplitude = 25.0 * std::numbers::pi / 180.0;
  double steer_period = 4.0;
  int max_steps = 200;
  /// Roll-over proxy on the realized roll or pitch, radians.
  double attitude_limit = 35.0 * std::numbers::pi / 180.0;
  double stuck_traction = 0.05;
  int stuck_steps = 10;
  /// Episodes start at least this far from the map border, meters.
  double start_margin = 2.0;

  void validate() const;
};

struct DatasetRecord
{
  TerrainFeature feature;
  TraversabilitySample target;
  double unevenness = 0;
  std::uint64_t map_seed = 0;
  int episode = 0;
};

enum class EpisodeEnd
{
  exited,
  rolled_over,
  stuck,
  step_limit,
};

std::string to_string(EpisodeEnd end);

struct EpisodeTrace
{
  std::vector<DatasetRecord> records;
  std::vector<RobotState> states;
  EpisodeEnd end = EpisodeEnd::step_limit;
};

/// Sinusoidal-steering drive from a random start; rng is owned by the episode.
EpisodeTrace run_collection_episode(const TerrainMap& map, const RobotParams& params, const FeatureConfig& fcfg,
                                    const GroundTruthConfig& gcfg, const CollectConfig& ccfg, int episode,
                                    std::uint64_t seed);

/// Episodes run in parallel, each seeded from (seed, map seed, index);
/// records are concatenated in episode order.
std::vector<DatasetRecord> collect_episodes(const TerrainMap& map, const RobotParams& params,
                                            const FeatureConfig& fcfg, const GroundTruthConfig& gcfg,
                                            const CollectConfig& ccfg, int n_episodes, std::uint64_t seed);

/// Linearly interpolated percentile (pct in [0, 100]) of a nonempty sample.
double percentile(std::vector<double> values, double pct);

struct DatasetSplit
{
  /// Records with unevenness at or below this value are in-distribution.
  double threshold = 0;
  std::vector<DatasetRecord> train_id;
  std::vector<DatasetRecord> val_id;
  std::vector<DatasetRecord> test;
  std::vector<bool> test_is_ood;
};

/// Threshold from the training pool; train and validation keep ID records only,
/// the test pool keeps everything with an ID/OOD label.
DatasetSplit split_dataset(const std::vector<DatasetRecord>& train_pool, const std::vector<DatasetRecord>& val_pool,
                           const std::vector<DatasetRecord>& test_pool, double pct = 50.0);

/// Record-per-line text format:
///     evtrav-dataset 1
///     records <count> patch <P>
///     <map_seed> <episode> <yaw> <unevenness> <4 targets> <4 slopes> <4 heights>
///         <4 veg heights> <2 roll distances> <2 pitch distances> <dirt> <veg>
///         <P*P elevation> <P*P semantic> <P*P veg height>
/// Reals are hex floats, patches row-major.
void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(std::istream& in);
void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> load_dataset(const std::string& path);

}  // namespace evtrav
