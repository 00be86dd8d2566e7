#include "evtrav/cvar_map.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "evtrav/text_io.hpp"

namespace evtrav
{

int nearest_yaw_bin(double yaw, int n_yaw)
{
  require(n_yaw >= 1, "nearest_yaw_bin: need at least one bin");
  const double turn = 2 * std::numbers::pi;
  double a = std::fmod(yaw, turn);
  if (a < 0) {
    a += turn;
  }
  const auto j = static_cast<int>(std::lround(a / turn * n_yaw));
  return j % n_yaw;
}

namespace
{

std::vector<RobotState> field_poses(const TerrainMap& map, int n_yaw)
{
  require(n_yaw >= 1, "PmfField: need at least one yaw bin");
  std::vector<RobotState> poses;
  poses.reserve(static_cast<std::size_t>(map.rows() * map.cols() * n_yaw));
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      for (int j = 0; j < n_yaw; ++j) {
        poses.push_back({(static_cast<double>(c) + 0.5) * map.resolution, (static_cast<double>(r) + 0.5) * map.resolution,
                         2 * std::numbers::pi * j / n_yaw});
      }
    }
  }
  return poses;
}

PmfField empty_field(const TerrainMap& map, int n_yaw, const ParamDiscretizations& discs)
{
  PmfField f;
  f.rows = map.rows();
  f.cols = map.cols();
  f.n_yaw = n_yaw;
  f.resolution = map.resolution;
  f.discs = discs;
  const Eigen::Index n = f.rows * f.cols * n_yaw;
  for (TravParam p : kAllTravParams) {
    f.pmfs[index_of(p)].resize(discs.of(p).size(), n);
  }
  return f;
}

}  // namespace

PmfField learned_pmf_field(const TerrainMap& map, const EvidentialModel& model, const RobotParams& params, int n_yaw)
{
  const EvidentialConfig& cfg = model.config();
  const auto poses = field_poses(map, n_yaw);
  PmfField field = empty_field(map, n_yaw, cfg.discretizations());
  field.ood.assign(poses.size(), 0);
  constexpr std::size_t kChunk = 512;
  const std::size_t chunks = (poses.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t ch) {
    const std::size_t begin = ch * kChunk;
    const std::size_t end = std::min(poses.size(), begin + kChunk);
    std::vector<DatasetRecord> recs(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      recs[i - begin].feature = extract_feature(map, poses[i], params, cfg.features);
    }
    const PreparedData d = prepare_data(recs, cfg);
    const auto pmfs = model.expected_pmfs(d.inputs, d.physics);
    const ForwardPass fp = model.forward(d.inputs);
    for (std::size_t k = 0; k < kNumTravParams; ++k) {
      field.pmfs[k].middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = pmfs[k];
    }
    for (std::size_t i = begin; i < end; ++i) {
      field.ood[i] = fp.shared_evidence[static_cast<Eigen::Index>(i - begin)] < model.ood_threshold() ? 1 : 0;
    }
  });
  return field;
}

PmfField prior_pmf_field(const TerrainMap& map, const PriorConfig& prior, const FeatureConfig& features,
                         const ParamDiscretizations& discs, const RobotParams& params, int n_yaw)
{
  const auto poses = field_poses(map, n_yaw);
  PmfField field = empty_field(map, n_yaw, discs);
  parallel_for(poses.size(), [&](std::size_t i) {
    const FootprintSample fp = footprint_at(map, poses[i], params, features);
    for (TravParam p : kAllTravParams) {
      field.pmfs[index_of(p)].col(static_cast<Eigen::Index>(i)) = physics_prior_pmf(fp, p, prior, discs.of(p)).masses();
    }
  });
  return field;
}

TraversabilitySample CvarMapStack::lookup(double x, double y, double yaw) const
{
  const auto c = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x / resolution)), 0, cols - 1);
  const auto r = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(y / resolution)), 0, rows - 1);
  const std::size_t base = index(r, c, nearest_yaw_bin(yaw, n_yaw), 0);
  return {values[base], values[base + 1], values[base + 2], values[base + 3]};
}

bool CvarMapStack::ood_at(double x, double y, double yaw) const
{
  if (ood.empty()) {
    return false;
  }
  const auto c = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x / resolution)), 0, cols - 1);
  const auto r = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(y / resolution)), 0, rows - 1);
  return ood[static_cast<std::size_t>((r * cols + c) * n_yaw + nearest_yaw_bin(yaw, n_yaw))] != 0;
}

CvarMapStack CvarMapStack::constant(Eigen::Index rows, Eigen::Index cols, int n_yaw, double resolution,
                                    const TraversabilitySample& value)
{
  require(rows > 0 && cols > 0 && n_yaw >= 1 && resolution > 0, "CvarMapStack: invalid shape");
  CvarMapStack s;
  s.rows = rows;
  s.cols = cols;
  s.n_yaw = n_yaw;
  s.resolution = resolution;
  s.values.resize(static_cast<std::size_t>(rows * cols * n_yaw * kNumTravParams));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      s.set(r, c, value);
    }
  }
  return s;
}

void CvarMapStack::set(Eigen::Index r, Eigen::Index c, const TraversabilitySample& value)
{
  for (int j = 0; j < n_yaw; ++j) {
    for (int k = 0; k < kNumTravParams; ++k) {
      values[index(r, c, j, k)] = value[k];
    }
  }
}

CvarMapStack cvar_stack(const PmfField& field, double alpha)
{
  require(alpha > 0 && alpha <= 1, "cvar_stack: alpha must lie in (0, 1]");
  CvarMapStack s;
  s.rows = field.rows;
  s.cols = field.cols;
  s.n_yaw = field.n_yaw;
  s.resolution = field.resolution;
  s.alpha = alpha;
  s.ood = field.ood;
  const Eigen::Index n = field.rows * field.cols * field.n_yaw;
  s.values.resize(static_cast<std::size_t>(n * kNumTravParams));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (TravParam p : kAllTravParams) {
      const int k = index_of(p);
      const Pmf<> pmf(field.pmfs[static_cast<std::size_t>(k)].col(static_cast<Eigen::Index>(i)), field.discs.of(p));
      s.values[i * kNumTravParams + static_cast<std::size_t>(k)] = is_traction(p) ? cvar_left(pmf, alpha) : cvar_right(pmf, alpha);
    }
  });
  return s;
}

CvarMapStack build_cvar_maps(const TerrainMap& map, const EvidentialModel& model, const RobotParams& params,
                             double alpha, int n_yaw)
{
  return cvar_stack(learned_pmf_field(map, model, params, n_yaw), alpha);
}

void write_cvar_stack(std::ostream& out, const CvarMapStack& s)
{
  out << "evtrav-cvar 1\n";
  out << "resolution " << format_hex(s.resolution) << "\n";
  out << "size " << s.rows << ' ' << s.cols << ' ' << s.n_yaw << ' ' << kNumTravParams << "\n";
  out << "alpha " << format_hex(s.alpha) << "\n";
  out << "values\n";
  const std::size_t per_cell = static_cast<std::size_t>(s.n_yaw * kNumTravParams);
  for (std::size_t cell = 0; cell < static_cast<std::size_t>(s.rows * s.cols); ++cell) {
    for (std::size_t k = 0; k < per_cell; ++k) {
      out << (k == 0 ? "" : " ") << format_hex(s.values[cell * per_cell + k]);
    }
    out << '\n';
  }
  out << "ood " << (s.has_ood() ? 1 : 0) << "\n";
  if (s.has_ood()) {
    const std::size_t per_row = static_cast<std::size_t>(s.cols * s.n_yaw);
    for (Eigen::Index r = 0; r < s.rows; ++r) {
      for (std::size_t k = 0; k < per_row; ++k) {
        out << static_cast<char>('0' + s.ood[static_cast<std::size_t>(r) * per_row + k]);
      }
      out << '\n';
    }
  }
}

CvarMapStack read_cvar_stack(std::istream& in)
{
  const std::string ctx = "cvar stack";
  expect_token(in, "evtrav-cvar", ctx);
  require(read_integer(in, ctx) == 1, "cvar stack: unsupported version");
  CvarMapStack s;
  expect_token(in, "resolution", ctx);
  s.resolution = read_double(in, ctx);
  expect_token(in, "size", ctx);
  s.rows = read_integer(in, ctx);
  s.cols = read_integer(in, ctx);
  s.n_yaw = static_cast<int>(read_integer(in, ctx));
  require(read_integer(in, ctx) == kNumTravParams && s.rows > 0 && s.cols > 0 && s.n_yaw > 0, "cvar stack: bad size");
  expect_token(in, "alpha", ctx);
  s.alpha = read_double(in, ctx);
  expect_token(in, "values", ctx);
  s.values.resize(static_cast<std::size_t>(s.rows * s.cols * s.n_yaw * kNumTravParams));
  for (double& v : s.values) {
    v = read_double(in, ctx);
  }
  expect_token(in, "ood", ctx);
  if (read_integer(in, ctx) == 1) {
    const std::size_t per_row = static_cast<std::size_t>(s.cols * s.n_yaw);
    s.ood.resize(static_cast<std::size_t>(s.rows) * per_row);
    for (Eigen::Index r = 0; r < s.rows; ++r) {
      std::string line;
      in >> line;
      require(in && line.size() == per_row, "cvar stack: malformed ood row");
      for (std::size_t k = 0; k < per_row; ++k) {
        require(line[k] == '0' || line[k] == '1', "cvar stack: ood flags must be 0 or 1");
        s.ood[static_cast<std::size_t>(r) * per_row + k] = static_cast<unsigned char>(line[k] - '0');
      }
    }
  }
  return s;
}

}  // namespace evtrav
