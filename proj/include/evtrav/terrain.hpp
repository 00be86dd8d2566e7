#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "evtrav/common.hpp"
#include "evtrav/physics_prior.hpp"

namespace evtrav
{

using SemanticGrid = Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic>;

/// 2.5D grid world. Cell (r, c) covers [c, c+1) x [r, r+1) times resolution in
/// world (x, y); values are taken at cell centers.
struct TerrainMap
{
  double resolution = 0.25;
  MatrixXd elevation;
  SemanticGrid semantic;
  MatrixXd veg_height;
  std::uint64_t seed = 0;
  double scale = 1.0;

  Eigen::Index rows() const { return elevation.rows(); }
  Eigen::Index cols() const { return elevation.cols(); }
  double width() const { return static_cast<double>(cols()) * resolution; }
  double height() const { return static_cast<double>(rows()) * resolution; }

  bool contains(double x, double y) const { return x >= 0 && y >= 0 && x < width() && y < height(); }
  /// Cell under (x, y), clamped to the grid.
  std::pair<Eigen::Index, Eigen::Index> cell_of(double x, double y) const;
  /// Bilinear elevation between cell centers; clamps outside the grid.
  double elevation_at(double x, double y) const;
  Semantic semantic_at(double x, double y) const;
  double veg_height_at(double x, double y) const;

  void validate() const;
};

struct TerrainGenConfig
{
  double size_m = 25.0;
  double resolution = 0.25;
  double scale = 1.0;
  double veg_fraction = 0.1;
  /// Elevation standard deviation of the rocky component at scale 1, meters.
  double rock_amplitude = 0.08;
  /// Standard deviation of the smooth rolling component at scale 1, meters.
  double hill_amplitude = 0.25;
  double max_veg_height = 0.25;
};

/// Diamond-square fractal terrain. The rocky component is modulated by a smooth
/// mask so each map mixes rough patches with smooth corridors. Elevation is
/// linear in scale; scale 0 gives a flat map.
TerrainMap generate_map(std::uint64_t seed, const TerrainGenConfig& cfg);

/// Square diamond-square field of side 2^levels + 1 with unit standard
/// deviation; roughness in (0, 1] sets the amplitude decay per level.
MatrixXd diamond_square(int levels, double roughness, std::uint64_t seed);

/// Text grid format:
///     evtrav-terrain 1
///     resolution <r>
///     size <rows> <cols>
///     seed <seed>
///     scale <scale>
///     elevation            followed by <rows> lines of <cols> hex floats
///     semantic             followed by <rows> lines of 0/1 digits
///     veg_height           followed by <rows> lines of <cols> hex floats
void write_terrain(std::ostream& out, const TerrainMap& map);
TerrainMap read_terrain(std::istream& in);
void save_terrain(const std::string& path, const TerrainMap& map);
TerrainMap load_terrain(const std::string& path);

}  // namespace evtrav
