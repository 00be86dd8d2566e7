#include "evtrav/features.hpp"

#include <cmath>

namespace evtrav
{

double TerrainFeature::unevenness() const
{
  const double mean = elevation_patch.mean();
  return std::sqrt((elevation_patch.array() - mean).square().mean());
}

double heading_grade(const TerrainMap& map, const Eigen::Vector2d& at, double yaw)
{
  const double half = map.resolution / 2;
  const double dx = half * std::cos(yaw);
  const double dy = half * std::sin(yaw);
  const double rise = map.elevation_at(at.x() + dx, at.y() + dy) - map.elevation_at(at.x() - dx, at.y() - dy);
  return std::abs(rise) / map.resolution;
}

FootprintSample footprint_at(const TerrainMap& map, const RobotState& pose, const RobotParams& params,
                             const FeatureConfig& cfg)
{
  FootprintSample fp;
  const auto wheels = params.wheel_positions();
  for (std::size_t i = 0; i < 4; ++i) {
    const Eigen::Vector2d w = body_to_world(pose, wheels[i]);
    fp.wheel_slopes[i] = heading_grade(map, w, pose.yaw);
    fp.wheel_heights[i] = map.elevation_at(w.x(), w.y());
    fp.veg_heights[i] = map.veg_height_at(w.x(), w.y());
  }
  fp.roll_pair_distances = {params.track_width, params.track_width};
  fp.pitch_pair_distances = {params.wheelbase, params.wheelbase};

  const int n = cfg.footprint_samples;
  int veg = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double u = n == 1 ? 0.0 : (static_cast<double>(i) / (n - 1) - 0.5) * params.wheelbase;
      const double v = n == 1 ? 0.0 : (static_cast<double>(j) / (n - 1) - 0.5) * params.track_width;
      const Eigen::Vector2d p = body_to_world(pose, {u, v});
      veg += map.semantic_at(p.x(), p.y()) == Semantic::veg ? 1 : 0;
    }
  }
  fp.veg_ratio = static_cast<double>(veg) / (n * n);
  fp.dirt_ratio = 1 - fp.veg_ratio;
  return fp;
}

TerrainFeature extract_feature(const TerrainMap& map, const RobotState& pose, const RobotParams& params,
                               const FeatureConfig& cfg)
{
  cfg.validate();
  require(std::isfinite(pose.x) && std::isfinite(pose.y) && std::isfinite(pose.yaw), "extract_feature: non-finite pose");
  require(map.contains(pose.x, pose.y), "extract_feature: pose is off the map");
  const int p = cfg.patch_size;
  TerrainFeature f;
  f.elevation_patch.resize(p, p);
  f.semantic_patch.resize(p, p);
  f.veg_patch.resize(p, p);
  const double center = (p - 1) / 2.0;
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      const Eigen::Vector2d body((i - center) * cfg.patch_spacing, (center - j) * cfg.patch_spacing);
      const Eigen::Vector2d w = body_to_world(pose, body);
      f.elevation_patch(i, j) = map.elevation_at(w.x(), w.y());
      f.semantic_patch(i, j) = map.semantic_at(w.x(), w.y()) == Semantic::veg ? 1.0 : 0.0;
      f.veg_patch(i, j) = map.veg_height_at(w.x(), w.y());
    }
  }
  f.elevation_patch.array() -= f.elevation_patch.mean();
  f.footprint = footprint_at(map, pose, params, cfg);
  f.yaw = pose.yaw;
  return f;
}

}  // namespace evtrav
