#include "evtrav/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>

#include "evtrav/text_io.hpp"

namespace evtrav
{

std::pair<Eigen::Index, Eigen::Index> TerrainMap::cell_of(double x, double y) const
{
  const auto c = static_cast<Eigen::Index>(std::floor(x / resolution));
  const auto r = static_cast<Eigen::Index>(std::floor(y / resolution));
  return {std::clamp<Eigen::Index>(r, 0, rows() - 1), std::clamp<Eigen::Index>(c, 0, cols() - 1)};
}

double TerrainMap::elevation_at(double x, double y) const
{
  const double fx = std::clamp(x / resolution - 0.5, 0.0, static_cast<double>(cols() - 1));
  const double fy = std::clamp(y / resolution - 0.5, 0.0, static_cast<double>(rows() - 1));
  const auto c0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fx), cols() - 1);
  const auto r0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fy), rows() - 1);
  const Eigen::Index c1 = std::min<Eigen::Index>(c0 + 1, cols() - 1);
  const Eigen::Index r1 = std::min<Eigen::Index>(r0 + 1, rows() - 1);
  const double tx = fx - static_cast<double>(c0);
  const double ty = fy - static_cast<double>(r0);
  const double top = (1 - tx) * elevation(r0, c0) + tx * elevation(r0, c1);
  const double bottom = (1 - tx) * elevation(r1, c0) + tx * elevation(r1, c1);
  return (1 - ty) * top + ty * bottom;
}

Semantic TerrainMap::semantic_at(double x, double y) const
{
  const auto [r, c] = cell_of(x, y);
  return static_cast<Semantic>(semantic(r, c));
}

double TerrainMap::veg_height_at(double x, double y) const
{
  const auto [r, c] = cell_of(x, y);
  return veg_height(r, c);
}

void TerrainMap::validate() const
{
  require(resolution > 0, "TerrainMap: resolution must be positive");
  require(rows() > 0 && cols() > 0, "TerrainMap: empty grid");
  require(semantic.rows() == rows() && semantic.cols() == cols(), "TerrainMap: semantic grid shape mismatch");
  require(veg_height.rows() == rows() && veg_height.cols() == cols(), "TerrainMap: vegetation grid shape mismatch");
  require(elevation.allFinite() && veg_height.allFinite(), "TerrainMap: non-finite values");
  for (Eigen::Index r = 0; r < rows(); ++r) {
    for (Eigen::Index c = 0; c < cols(); ++c) {
      require(semantic(r, c) <= 1, "TerrainMap: unknown semantic class");
      require(veg_height(r, c) >= 0, "TerrainMap: negative vegetation height");
      require(semantic(r, c) == 1 || veg_height(r, c) == 0, "TerrainMap: vegetation height on dirt");
    }
  }
}

MatrixXd diamond_square(int levels, double roughness, std::uint64_t seed)
{
  require(levels >= 1 && levels <= 14, "diamond_square: levels must lie in [1, 14]");
  require(roughness > 0 && roughness <= 1, "diamond_square: roughness must lie in (0, 1]");
  const Eigen::Index n = (Eigen::Index{1} << levels) + 1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd h = MatrixXd::Zero(n, n);
  h(0, 0) = normal(rng);
  h(0, n - 1) = normal(rng);
  h(n - 1, 0) = normal(rng);
  h(n - 1, n - 1) = normal(rng);

  double amp = roughness;
  for (Eigen::Index step = n - 1; step > 1; step /= 2) {
    const Eigen::Index half = step / 2;
    // Diamond: square centers from their four corners.
    for (Eigen::Index r = half; r < n; r += step) {
      for (Eigen::Index c = half; c < n; c += step) {
        const double avg = (h(r - half, c - half) + h(r - half, c + half) + h(r + half, c - half) + h(r + half, c + half)) / 4;
        h(r, c) = avg + amp * normal(rng);
      }
    }
    // Square: edge midpoints from the in-grid neighbours.
    for (Eigen::Index r = 0; r < n; r += half) {
      for (Eigen::Index c = (r / half) % 2 == 0 ? half : 0; c < n; c += step) {
        double sum = 0;
        int count = 0;
        if (r >= half) {
          sum += h(r - half, c);
          ++count;
        }
        if (r + half < n) {
          sum += h(r + half, c);
          ++count;
        }
        if (c >= half) {
          sum += h(r, c - half);
          ++count;
        }
        if (c + half < n) {
          sum += h(r, c + half);
          ++count;
        }
        h(r, c) = sum / count + amp * normal(rng);
      }
    }
    amp *= roughness;
  }
  return h;
}

namespace
{

// Crops a square field to rows x cols and rescales it to zero mean, unit std.
MatrixXd standardized_crop(const MatrixXd& field, Eigen::Index rows, Eigen::Index cols)
{
  MatrixXd out = field.topLeftCorner(rows, cols);
  out.array() -= out.mean();
  const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(out.size()));
  if (sd > 0) {
    out /= sd;
  }
  return out;
}

}  // namespace

TerrainMap generate_map(std::uint64_t seed, const TerrainGenConfig& cfg)
{
  require(cfg.size_m > 0 && cfg.resolution > 0, "generate_map: size and resolution must be positive");
  require(cfg.scale >= 0, "generate_map: scale must be non-negative");
  require(cfg.veg_fraction >= 0 && cfg.veg_fraction <= 1, "generate_map: vegetation fraction must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(std::llround(cfg.size_m / cfg.resolution));
  require(n >= 2, "generate_map: map needs at least 2 cells per side");
  int levels = 1;
  while ((Eigen::Index{1} << levels) + 1 < n) {
    ++levels;
  }

  const MatrixXd rock = standardized_crop(diamond_square(levels, 0.62, derive_seed(seed, {1})), n, n);
  const MatrixXd mask = standardized_crop(diamond_square(levels, 0.4, derive_seed(seed, {2})), n, n);
  const MatrixXd hills = standardized_crop(diamond_square(levels, 0.35, derive_seed(seed, {3})), n, n);
  const MatrixXd veg_noise = standardized_crop(diamond_square(levels, 0.5, derive_seed(seed, {4})), n, n);

  TerrainMap map;
  map.resolution = cfg.resolution;
  map.seed = seed;
  map.scale = cfg.scale;
  // Rough patches where the mask is high, smooth corridors where it is low.
  const Eigen::ArrayXXd weight = 0.15 + 1.35 / (1 + (-2 * mask.array()).exp());
  map.elevation = (cfg.scale * (cfg.rock_amplitude * rock.array() * weight + cfg.hill_amplitude * hills.array())).matrix();

  map.semantic = SemanticGrid::Zero(n, n);
  map.veg_height = MatrixXd::Zero(n, n);
  if (cfg.veg_fraction > 0) {
    std::vector<double> sorted(veg_noise.data(), veg_noise.data() + veg_noise.size());
    std::sort(sorted.begin(), sorted.end());
    const auto k = static_cast<std::size_t>(std::llround((1 - cfg.veg_fraction) * static_cast<double>(sorted.size())));
    const double threshold = k < sorted.size() ? sorted[k] : std::numeric_limits<double>::infinity();
    const double top = sorted.back();
    const double min_height = 0.2 * cfg.max_veg_height;
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        const double v = veg_noise(r, c);
        if (v >= threshold) {
          map.semantic(r, c) = static_cast<unsigned char>(Semantic::veg);
          const double t = top > threshold ? (v - threshold) / (top - threshold) : 1.0;
          map.veg_height(r, c) = min_height + (cfg.max_veg_height - min_height) * std::sqrt(t);
        }
      }
    }
  }
  return map;
}

void write_terrain(std::ostream& out, const TerrainMap& map)
{
  map.validate();
  out << "evtrav-terrain 1\n";
  out << "resolution " << format_hex(map.resolution) << "\n";
  out << "size " << map.rows() << ' ' << map.cols() << "\n";
  out << "seed " << map.seed << "\n";
  out << "scale " << format_hex(map.scale) << "\n";
  out << "elevation\n";
  write_rows(out, map.elevation);
  out << "semantic\n";
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      out << static_cast<char>('0' + map.semantic(r, c));
    }
    out << '\n';
  }
  out << "veg_height\n";
  write_rows(out, map.veg_height);
}

TerrainMap read_terrain(std::istream& in)
{
  const std::string ctx = "terrain";
  expect_token(in, "evtrav-terrain", ctx);
  require(read_integer(in, ctx) == 1, "terrain: unsupported version");
  TerrainMap map;
  expect_token(in, "resolution", ctx);
  map.resolution = read_double(in, ctx);
  expect_token(in, "size", ctx);
  const long long rows = read_integer(in, ctx);
  const long long cols = read_integer(in, ctx);
  require(rows > 0 && cols > 0, "terrain: invalid size");
  expect_token(in, "seed", ctx);
  std::string seed_token;
  in >> seed_token;
  require(static_cast<bool>(in), "terrain: missing seed");
  map.seed = std::stoull(seed_token);
  expect_token(in, "scale", ctx);
  map.scale = read_double(in, ctx);
  expect_token(in, "elevation", ctx);
  map.elevation = read_rows(in, rows, cols, ctx);
  expect_token(in, "semantic", ctx);
  map.semantic.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    std::string line;
    in >> line;
    require(in && static_cast<long long>(line.size()) == cols, "terrain: malformed semantic row");
    for (Eigen::Index c = 0; c < cols; ++c) {
      require(line[c] == '0' || line[c] == '1', "terrain: semantic values must be 0 or 1");
      map.semantic(r, c) = static_cast<unsigned char>(line[c] - '0');
    }
  }
  expect_token(in, "veg_height", ctx);
  map.veg_height = read_rows(in, rows, cols, ctx);
  map.validate();
  return map;
}

void save_terrain(const std::string& path, const TerrainMap& map)
{
  auto out = open_for_writing(path);
  write_terrain(out, map);
  require(static_cast<bool>(out), "write failed for '" + path + "'");
}

TerrainMap load_terrain(const std::string& path)
{
  auto in = open_for_reading(path);
  return read_terrain(in);
}

}  // namespace evtrav
