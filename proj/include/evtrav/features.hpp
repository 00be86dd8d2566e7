#pragma once

#include "evtrav/physics_prior.hpp"
#include "evtrav/robot.hpp"
#include "evtrav/terrain.hpp"

namespace evtrav
{

struct FeatureConfig
{
  int patch_size = 8;
  double patch_spacing = 0.25;
  /// Samples per side of the body rectangle used for semantic ratios.
  int footprint_samples = 5;

  void validate() const
  {
    require(patch_size >= 1, "FeatureConfig: patch size must be positive");
    require(patch_spacing > 0, "FeatureConfig: patch spacing must be positive");
    require(footprint_samples >= 1, "FeatureConfig: footprint samples must be positive");
  }
};

/// Yaw-aligned observation around the robot. Patch row i runs along the
/// heading (rear to front), column j across it (left to right).
struct TerrainFeature
{
  MatrixXd elevation_patch;  // mean-centered, meters
  MatrixXd semantic_patch;   // 1 on vegetation, 0 on dirt
  MatrixXd veg_patch;        // vegetation height, meters
  FootprintSample footprint;
  double yaw = 0;

  /// Standard deviation of the elevation patch.
  double unevenness() const;
};

/// World position of body-frame point (forward, left) for the given pose.
inline Eigen::Vector2d body_to_world(const RobotState& pose, const Eigen::Vector2d& body)
{
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {pose.x + c * body.x() - s * body.y(), pose.y + s * body.x() + c * body.y()};
}

/// Heading-aligned absolute grade at a world point, one cell of run.
double heading_grade(const TerrainMap& map, const Eigen::Vector2d& at, double yaw);

FootprintSample footprint_at(const TerrainMap& map, const RobotState& pose, const RobotParams& params,
                             const FeatureConfig& cfg = {});

TerrainFeature extract_feature(const TerrainMap& map, const RobotState& pose, const RobotParams& params,
                               const FeatureConfig& cfg = {});

}  // namespace evtrav
