#include "evtrav/simulator.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "evtrav/text_io.hpp"

namespace evtrav
{

void GroundTruthConfig::validate() const
{
  require(exponent > 0 && concentration > 0, "GroundTruthConfig: exponent and concentration must be positive");
  require(max_slope_linear > 0 && max_slope_angular > 0 && max_veg_height > 0,
          "GroundTruthConfig: maxima must be positive");
  require(attitude_noise >= 0 && contact_radius >= 0, "GroundTruthConfig: noise and radius must be non-negative");
}

void CollectConfig::validate() const
{
  require(speed > 0 && steer_period > 0, "CollectConfig: speed and period must be positive");
  require(max_steps >= 1 && stuck_steps >= 1, "CollectConfig: step counts must be positive");
  require(attitude_limit > 0, "CollectConfig: attitude limit must be positive");
  require(start_margin >= 0, "CollectConfig: start margin must be non-negative");
}

std::string to_string(EpisodeEnd end)
{
  switch (end) {
    case EpisodeEnd::exited:
      return "exited";
    case EpisodeEnd::rolled_over:
      return "rolled_over";
    case EpisodeEnd::stuck:
      return "stuck";
    case EpisodeEnd::step_limit:
      return "step_limit";
  }
  return "unknown";
}

double traction_mean(const FootprintSample& fp, const GroundTruthConfig& cfg, TravParam param)
{
  require(is_traction(param), "traction_mean: parameter is not a traction");
  const double s_max = param == TravParam::angular_traction ? cfg.max_slope_angular : cfg.max_slope_linear;
  auto law = [&](double x, double x_max) { return std::clamp(1 - std::pow(std::clamp(x / x_max, 0.0, 1.0), cfg.exponent), 0.0, 1.0); };
  double sum = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    double mu = law(fp.wheel_slopes[i], s_max);
    if (fp.veg_heights[i] > 0) {
      mu *= law(fp.veg_heights[i], cfg.max_veg_height);
    }
    sum += mu;
  }
  return sum / 4;
}

std::pair<double, double> contact_plane_attitude(const TerrainMap& map, const RobotState& state,
                                                 const RobotParams& params, const GroundTruthConfig& cfg)
{
  constexpr int kRing = 8;
  const auto wheels = params.wheel_positions();
  Eigen::Matrix<double, 4, 3> a;
  Eigen::Vector4d z;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector2d w = body_to_world(state, wheels[i]);
    double top = map.elevation_at(w.x(), w.y());
    if (cfg.contact_radius > 0) {
      for (int k = 0; k < kRing; ++k) {
        const double t = 2 * std::numbers::pi * k / kRing;
        top = std::max(top, map.elevation_at(w.x() + cfg.contact_radius * std::cos(t), w.y() + cfg.contact_radius * std::sin(t)));
      }
    }
    a.row(i) << 1.0, wheels[i].x(), wheels[i].y();
    z[i] = top;
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(z);
  // Pitch from the forward gradient, roll from the lateral one.
  return {std::atan(coef[2]), std::atan(coef[1])};
}

namespace
{

double sample_beta(double mean, double concentration, std::mt19937_64& rng)
{
  const double m = std::clamp(mean, 0.01, 0.99);
  std::gamma_distribution<double> ga(concentration * m, 1.0);
  std::gamma_distribution<double> gb(concentration * (1 - m), 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

}  // namespace

TraversabilitySample ground_truth_traversability(const TerrainMap& map, const RobotState& state,
                                                 const RobotParams& params, const GroundTruthConfig& cfg,
                                                 std::mt19937_64& rng)
{
  cfg.validate();
  require(map.contains(state.x, state.y), "ground_truth_traversability: state is off the map");
  const FootprintSample fp = footprint_at(map, state, params);
  const double mu1 = traction_mean(fp, cfg, TravParam::linear_traction);
  const double mu2 = traction_mean(fp, cfg, TravParam::angular_traction);
  const auto [roll, pitch] = contact_plane_attitude(map, state, params, cfg);
  if (!cfg.noise) {
    return {mu1, mu2, std::abs(roll), std::abs(pitch)};
  }
  std::normal_distribution<double> noise(0.0, cfg.attitude_noise);
  TraversabilitySample s;
  s.linear_traction = sample_beta(mu1, cfg.concentration, rng);
  s.angular_traction = sample_beta(mu2, cfg.concentration, rng);
  s.roll = std::abs(roll + noise(rng));
  s.pitch = std::abs(pitch + noise(rng));
  return s;
}

EpisodeTrace run_collection_episode(const TerrainMap& map, const RobotParams& params, const FeatureConfig& fcfg,
                                    const GroundTruthConfig& gcfg, const CollectConfig& ccfg, int episode,
                                    std::uint64_t seed)
{
  ccfg.validate();
  params.validate();
  std::mt19937_64 rng(derive_seed(seed, {map.seed, static_cast<std::uint64_t>(episode)}));
  const double margin_x = std::min(ccfg.start_margin, map.width() / 2);
  const double margin_y = std::min(ccfg.start_margin, map.height() / 2);
  std::uniform_real_distribution<double> ux(margin_x, map.width() - margin_x);
  std::uniform_real_distribution<double> uy(margin_y, map.height() - margin_y);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  RobotState state;
  state.x = ux(rng);
  state.y = uy(rng);
  state.yaw = angle(rng);
  const double phase = angle(rng);

  EpisodeTrace trace;
  int stuck = 0;
  for (int step = 0; step < ccfg.max_steps; ++step) {
    if (!map.contains(state.x, state.y)) {
      trace.end = EpisodeEnd::exited;
      return trace;
    }
    DatasetRecord rec;
    rec.feature = extract_feature(map, state, params, fcfg);
    rec.target = ground_truth_traversability(map, state, params, gcfg, rng);
    rec.unevenness = rec.feature.unevenness();
    rec.map_seed = map.seed;
    rec.episode = episode;
    trace.records.push_back(rec);
    trace.states.push_back(state);
    if (rec.target.roll > ccfg.attitude_limit || rec.target.pitch > ccfg.attitude_limit) {
      trace.end = EpisodeEnd::rolled_over;
      return trace;
    }
    stuck = rec.target.linear_traction < ccfg.stuck_traction ? stuck + 1 : 0;
    if (stuck >= ccfg.stuck_steps) {
      trace.end = EpisodeEnd::stuck;
      return trace;
    }
    const double t = step * params.dt;
    const ControlInput u{ccfg.speed, ccfg.steer_amplitude * std::sin(2 * std::numbers::pi * t / ccfg.steer_period + phase)};
    state = step_bicycle(state, u, rec.target, params);
  }
  trace.end = EpisodeEnd::step_limit;
  return trace;
}

std::vector<DatasetRecord> collect_episodes(const TerrainMap& map, const RobotParams& params,
                                            const FeatureConfig& fcfg, const GroundTruthConfig& gcfg,
                                            const CollectConfig& ccfg, int n_episodes, std::uint64_t seed)
{
  require(n_episodes >= 0, "collect_episodes: episode count must be non-negative");
  std::vector<EpisodeTrace> traces(static_cast<std::size_t>(n_episodes));
  parallel_for(traces.size(), [&](std::size_t e) {
    traces[e] = run_collection_episode(map, params, fcfg, gcfg, ccfg, static_cast<int>(e), seed);
  });
  std::vector<DatasetRecord> out;
  for (auto& t : traces) {
    out.insert(out.end(), std::make_move_iterator(t.records.begin()), std::make_move_iterator(t.records.end()));
  }
  return out;
}

double percentile(std::vector<double> values, double pct)
{
  require(!values.empty(), "percentile: empty sample");
  require(pct >= 0 && pct <= 100, "percentile: pct must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DatasetSplit split_dataset(const std::vector<DatasetRecord>& train_pool, const std::vector<DatasetRecord>& val_pool,
                           const std::vector<DatasetRecord>& test_pool, double pct)
{
  require(!train_pool.empty(), "split_dataset: empty training pool");
  std::vector<double> u;
  u.reserve(train_pool.size());
  for (const auto& r : train_pool) {
    u.push_back(r.unevenness);
  }
  DatasetSplit split;
  split.threshold = percentile(std::move(u), pct);
  for (const auto& r : train_pool) {
    if (r.unevenness <= split.threshold) {
      split.train_id.push_back(r);
    }
  }
  for (const auto& r : val_pool) {
    if (r.unevenness <= split.threshold) {
      split.val_id.push_back(r);
    }
  }
  split.test = test_pool;
  for (const auto& r : test_pool) {
    split.test_is_ood.push_back(r.unevenness > split.threshold);
  }
  return split;
}

namespace
{

void write_patch(std::ostream& out, const MatrixXd& m)
{
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << ' ' << format_hex(m(i, j));
    }
  }
}

MatrixXd read_patch(std::istream& in, int p)
{
  MatrixXd m(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      m(i, j) = read_double(in, "dataset");
    }
  }
  return m;
}

}  // namespace

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records)
{
  const Eigen::Index p = records.empty() ? 0 : records.front().feature.elevation_patch.rows();
  out << "evtrav-dataset 1\n";
  out << "records " << records.size() << " patch " << p << "\n";
  for (const auto& r : records) {
    const auto& f = r.feature;
    require(f.elevation_patch.rows() == p && f.elevation_patch.cols() == p && f.semantic_patch.rows() == p &&
                f.semantic_patch.cols() == p && f.veg_patch.rows() == p && f.veg_patch.cols() == p,
            "write_dataset: inconsistent patch sizes");
    out << r.map_seed << ' ' << r.episode << ' ' << format_hex(f.yaw) << ' ' << format_hex(r.unevenness);
    for (int k = 0; k < 4; ++k) {
      out << ' ' << format_hex(r.target[k]);
    }
    const auto& fp = f.footprint;
    for (const auto* arr : {&fp.wheel_slopes, &fp.wheel_heights, &fp.veg_heights}) {
      for (double v : *arr) {
        out << ' ' << format_hex(v);
      }
    }
    for (const auto* arr : {&fp.roll_pair_distances, &fp.pitch_pair_distances}) {
      for (double v : *arr) {
        out << ' ' << format_hex(v);
      }
    }
    out << ' ' << format_hex(fp.dirt_ratio) << ' ' << format_hex(fp.veg_ratio);
    write_patch(out, f.elevation_patch);
    write_patch(out, f.semantic_patch);
    write_patch(out, f.veg_patch);
    out << '\n';
  }
}

std::vector<DatasetRecord> read_dataset(std::istream& in)
{
  const std::string ctx = "dataset";
  expect_token(in, "evtrav-dataset", ctx);
  require(read_integer(in, ctx) == 1, "dataset: unsupported version");
  expect_token(in, "records", ctx);
  const long long count = read_integer(in, ctx);
  expect_token(in, "patch", ctx);
  const long long p = read_integer(in, ctx);
  require(count >= 0 && p >= 0, "dataset: malformed header");
  std::vector<DatasetRecord> records(static_cast<std::size_t>(count));
  for (auto& r : records) {
    std::string seed_token;
    in >> seed_token;
    require(static_cast<bool>(in), "dataset: truncated record");
    r.map_seed = std::stoull(seed_token);
    r.episode = static_cast<int>(read_integer(in, ctx));
    auto& f = r.feature;
    f.yaw = read_double(in, ctx);
    r.unevenness = read_double(in, ctx);
    r.target.linear_traction = read_double(in, ctx);
    r.target.angular_traction = read_double(in, ctx);
    r.target.roll = read_double(in, ctx);
    r.target.pitch = read_double(in, ctx);
    auto& fp = f.footprint;
    for (auto* arr : {&fp.wheel_slopes, &fp.wheel_heights, &fp.veg_heights}) {
      for (double& v : *arr) {
        v = read_double(in, ctx);
      }
    }
    for (auto* arr : {&fp.roll_pair_distances, &fp.pitch_pair_distances}) {
      for (double& v : *arr) {
        v = read_double(in, ctx);
      }
    }
    fp.dirt_ratio = read_double(in, ctx);
    fp.veg_ratio = read_double(in, ctx);
    f.elevation_patch = read_patch(in, static_cast<int>(p));
    f.semantic_patch = read_patch(in, static_cast<int>(p));
    f.veg_patch = read_patch(in, static_cast<int>(p));
  }
  return records;
}

void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records)
{
  auto out = open_for_writing(path);
  write_dataset(out, records);
  require(static_cast<bool>(out), "write failed for '" + path + "'");
}

std::vector<DatasetRecord> load_dataset(const std::string& path)
{
  auto in = open_for_reading(path);
  return read_dataset(in);
}

}  // namespace evtrav
