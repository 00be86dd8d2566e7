#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "evtrav/simulator.hpp"

using namespace evtrav;

namespace
{

double grid_std(const MatrixXd& m) { return std::sqrt((m.array() - m.mean()).square().mean()); }

TerrainMap analytic_map(double size, double res, const std::function<double(double, double)>& f)
{
  const auto n = static_cast<Eigen::Index>(std::llround(size / res));
  TerrainMap map;
  map.resolution = res;
  map.elevation.resize(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      map.elevation(r, c) = f((c + 0.5) * res, (r + 0.5) * res);
    }
  }
  map.semantic = SemanticGrid::Zero(n, n);
  map.veg_height = MatrixXd::Zero(n, n);
  return map;
}

TerrainMap flat_map(double size = 20.0) { return analytic_map(size, 0.25, [](double, double) { return 1.5; }); }

}  // namespace

TEST_CASE("bicycle step examples")
{
  RobotParams p;
  const RobotState s0{0, 0, 0};
  const RobotState s1 = step_bicycle(s0, {1.0, 0.0}, {1, 1, 0, 0}, p);
  CHECK(s1.x == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s1.y == 0);
  CHECK(s1.yaw == 0);

  const RobotState s2 = step_bicycle({1, 2, 0.3}, {1.5, 0.2}, {0, 1, 0, 0}, p);
  CHECK(s2.x == 1);
  CHECK(s2.y == 2);
  CHECK(s2.yaw > 0.3);

  const RobotState full = step_bicycle({1, 2, 0.3}, {1.5, 0.2}, {1, 1, 0, 0}, p);
  const RobotState half = step_bicycle({1, 2, 0.3}, {1.5, 0.2}, {1, 0.5, 0, 0}, p);
  CHECK(half.yaw - 0.3 == doctest::Approx((full.yaw - 0.3) / 2).epsilon(1e-14));

  // Near-vertical steering stays finite.
  const RobotState clamped = step_bicycle(s0, {1.0, std::numbers::pi / 2}, {1, 1, 0, 0}, p);
  CHECK(std::isfinite(clamped.yaw));
}

TEST_CASE("full-traction step matches the standard kinematic bicycle")
{
  RobotParams p;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const RobotState s{5 * u(rng), 5 * u(rng), std::numbers::pi * u(rng)};
    const double v = 2 * u(rng);
    const double d = 0.5 * u(rng);
    const RobotState n = step_bicycle(s, {v, d}, {1, 1, 0, 0}, p);
    const double ex = s.x + p.dt * v * std::cos(s.yaw);
    const double ey = s.y + p.dt * v * std::sin(s.yaw);
    const double eyaw = s.yaw + p.dt * v / p.wheelbase * std::tan(d);
    CHECK(std::abs(n.x - ex) < 1e-12);
    CHECK(std::abs(n.y - ey) < 1e-12);
    CHECK(std::abs(n.yaw - eyaw) < 1e-12);
  }
}

TEST_CASE("map generation")
{
  TerrainGenConfig cfg;
  cfg.scale = 0;
  const TerrainMap flat = generate_map(4, cfg);
  CHECK(flat.elevation.maxCoeff() == flat.elevation.minCoeff());
  CHECK(flat.rows() == 100);
  CHECK_NOTHROW(flat.validate());

  cfg.scale = 1;
  const TerrainMap a = generate_map(9, cfg);
  const TerrainMap b = generate_map(9, cfg);
  CHECK(a.elevation == b.elevation);
  CHECK(a.semantic == b.semantic);
  CHECK(a.veg_height == b.veg_height);
  CHECK(generate_map(10, cfg).elevation != a.elevation);

  const double veg = static_cast<double>(a.semantic.cast<int>().sum()) / static_cast<double>(a.semantic.size());
  CHECK(veg == doctest::Approx(cfg.veg_fraction).epsilon(0.05));

  double s1 = 0;
  double s2 = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TerrainGenConfig c1;
    TerrainGenConfig c2;
    c2.scale = 2;
    s1 += grid_std(generate_map(seed, c1).elevation);
    s2 += grid_std(generate_map(seed, c2).elevation);
  }
  CHECK(s2 / s1 >= 1.8);
  CHECK(s2 / s1 <= 2.2);

  cfg.size_m = -1;
  CHECK_THROWS_AS(generate_map(1, cfg), DomainError);
}

TEST_CASE("diamond-square field shape")
{
  const MatrixXd f = diamond_square(5, 0.5, 1);
  CHECK(f.rows() == 33);
  CHECK(f.allFinite());
  CHECK(diamond_square(5, 0.5, 1) == f);
}

TEST_CASE("terrain text round trip is lossless")
{
  TerrainGenConfig cfg;
  cfg.size_m = 10;
  cfg.veg_fraction = 0.3;
  const TerrainMap m = generate_map(77, cfg);
  std::stringstream ss;
  write_terrain(ss, m);
  const std::string first = ss.str();
  const TerrainMap back = read_terrain(ss);
  CHECK(back.elevation == m.elevation);
  CHECK(back.semantic == m.semantic);
  CHECK(back.veg_height == m.veg_height);
  CHECK(back.seed == m.seed);
  CHECK(back.scale == m.scale);
  CHECK(back.resolution == m.resolution);
  std::stringstream again;
  write_terrain(again, back);
  CHECK(again.str() == first);

  std::stringstream bad("evtrav-terrain 2\n");
  CHECK_THROWS_AS(read_terrain(bad), DomainError);
}

TEST_CASE("bilinear elevation is exact on a plane")
{
  const TerrainMap m = analytic_map(5, 0.25, [](double x, double y) { return 0.3 * x - 0.7 * y + 2; });
  CHECK(m.elevation_at(1.3, 2.2) == doctest::Approx(0.3 * 1.3 - 0.7 * 2.2 + 2).epsilon(1e-12));
  CHECK(m.elevation_at(0.125, 0.125) == doctest::Approx(0.3 * 0.125 - 0.7 * 0.125 + 2).epsilon(1e-12));
  // Clamped outside the center lattice.
  CHECK(m.elevation_at(-3, 0.125) == m.elevation(0, 0));
}

TEST_CASE("feature extraction")
{
  const RobotParams p;
  const TerrainMap flat = flat_map();
  const TerrainFeature f = extract_feature(flat, {10, 10, 0.7}, p);
  CHECK(f.elevation_patch.rows() == 8);
  CHECK(f.elevation_patch.cwiseAbs().maxCoeff() == 0);
  CHECK(f.semantic_patch.cwiseAbs().maxCoeff() == 0);
  CHECK(f.unevenness() == 0);
  CHECK(f.footprint.dirt_ratio == 1);
  CHECK_THROWS_AS(extract_feature(flat, {-1, 10, 0}, p), DomainError);

  // Rotating world and pose together leaves the patch unchanged.
  const double phi = 0.9;
  const double cx = 3;
  const double cy = 3;
  auto f0 = [](double x, double y) { return 0.2 * x - 0.1 * y + 0.004 * (x - 3) * (x - 3) + 0.003 * (x - 3) * (y - 3); };
  auto f1 = [&](double x, double y) {
    const double dx = x - cx;
    const double dy = y - cy;
    return f0(cx + std::cos(phi) * dx + std::sin(phi) * dy, cy - std::sin(phi) * dx + std::cos(phi) * dy);
  };
  const TerrainMap world = analytic_map(6, 0.01, f0);
  const TerrainMap rotated = analytic_map(6, 0.01, f1);
  const double yaw = 0.3;
  const TerrainFeature a = extract_feature(world, {cx, cy, yaw}, p);
  const TerrainFeature b = extract_feature(rotated, {cx, cy, yaw + phi}, p);
  CHECK((a.elevation_patch - b.elevation_patch).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(a.elevation_patch.cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("footprint geometry")
{
  const RobotParams p;
  // Grade 0.25 rising along +x.
  const TerrainMap ramp = analytic_map(10, 0.25, [](double x, double) { return 0.25 * x; });
  const FootprintSample along = footprint_at(ramp, {5, 5, 0}, p);
  const FootprintSample across = footprint_at(ramp, {5, 5, std::numbers::pi / 2}, p);
  for (int i = 0; i < 4; ++i) {
    CHECK(along.wheel_slopes[i] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(across.wheel_slopes[i] < 1e-12);
  }
  // Front wheels sit higher when facing uphill.
  CHECK(along.wheel_heights[0] - along.wheel_heights[1] == doctest::Approx(0.25 * p.wheelbase).epsilon(1e-12));
  CHECK(along.roll_pair_distances[0] == p.track_width);
  CHECK(along.pitch_pair_distances[0] == p.wheelbase);

  TerrainMap veg = flat_map(10);
  veg.semantic.setOnes();
  veg.veg_height.setConstant(0.1);
  const FootprintSample v = footprint_at(veg, {5, 5, 0}, p);
  CHECK(v.veg_ratio == 1);
  CHECK(v.veg_heights[2] == 0.1);
}

TEST_CASE("ground truth laws")
{
  const RobotParams p;
  GroundTruthConfig g;
  const TerrainMap flat = flat_map();
  std::mt19937_64 rng(5);
  double m1 = 0;
  double m2 = 0;
  double m3 = 0;
  double m4 = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const auto s = ground_truth_traversability(flat, {10, 10, 0.4}, p, g, rng);
    CHECK(s.linear_traction >= 0);
    CHECK(s.linear_traction <= 1);
    CHECK(s.roll >= 0);
    m1 += s.linear_traction / n;
    m2 += s.angular_traction / n;
    m3 += s.roll / n;
    m4 += s.pitch / n;
  }
  CHECK(m1 >= 0.95);
  CHECK(m2 >= 0.95);
  CHECK(m3 <= 0.01);
  CHECK(m4 <= 0.01);

  // Grade exactly at the linear-traction maximum along the heading.
  const double smax = g.max_slope_linear;
  const TerrainMap ramp = analytic_map(20, 0.25, [&](double x, double) { return smax * x; });
  double ramp_mean = 0;
  for (int k = 0; k < n; ++k) {
    ramp_mean += ground_truth_traversability(ramp, {10, 10, 0}, p, g, rng).linear_traction / n;
  }
  CHECK(ramp_mean <= 0.05);

  g.noise = false;
  const FootprintSample fp = footprint_at(ramp, {10, 10, 0.5}, p);
  const auto det = ground_truth_traversability(ramp, {10, 10, 0.5}, p, g, rng);
  const auto det2 = ground_truth_traversability(ramp, {10, 10, 0.5}, p, g, rng);
  CHECK(det.linear_traction == traction_mean(fp, g, TravParam::linear_traction));
  CHECK(det.angular_traction == traction_mean(fp, g, TravParam::angular_traction));
  CHECK(det.pitch == det2.pitch);
  const double expected_mu = 1 - std::pow(smax * std::cos(0.5) / smax, 1.5);
  CHECK(det.linear_traction == doctest::Approx(expected_mu).epsilon(1e-9));
  // The contact plane follows the ramp: pitch atan(smax cos yaw), roll atan(smax sin yaw).
  CHECK(det.pitch == doctest::Approx(std::atan(smax * std::cos(0.5))).epsilon(1e-9));
  CHECK(det.roll == doctest::Approx(std::atan(smax * std::sin(0.5))).epsilon(1e-9));

  CHECK_THROWS_AS(ground_truth_traversability(ramp, {-2, 3, 0}, p, g, rng), DomainError);
}

TEST_CASE("episode collection")
{
  const RobotParams p;
  const FeatureConfig fc;
  const GroundTruthConfig gc;
  const CollectConfig cc;
  const TerrainMap flat = flat_map(25);
  for (int e = 0; e < 10; ++e) {
    const EpisodeTrace t = run_collection_episode(flat, p, fc, gc, cc, e, 1);
    CHECK(t.end != EpisodeEnd::rolled_over);
    for (const auto& s : t.states) {
      CHECK(flat.contains(s.x, s.y));
    }
  }

  TerrainGenConfig tg;
  const TerrainMap m = generate_map(3, tg);
  std::size_t previous = 0;
  for (int n : {1, 5, 20}) {
    const auto recs = collect_episodes(m, p, fc, gc, cc, n, 9);
    CHECK(recs.size() >= previous);
    previous = recs.size();
  }
  const auto recs = collect_episodes(m, p, fc, gc, cc, 20, 9);
  std::vector<int> per_episode(20, 0);
  for (const auto& r : recs) {
    ++per_episode.at(static_cast<std::size_t>(r.episode));
    CHECK(r.map_seed == 3);
    CHECK(r.unevenness >= 0);
  }
  for (int c : per_episode) {
    CHECK(c >= 1);
  }

  // Parallel and serial collection agree.
  const std::size_t saved = worker_count();
  worker_count() = 1;
  const auto serial = collect_episodes(m, p, fc, gc, cc, 6, 9);
  worker_count() = 4;
  const auto threaded = collect_episodes(m, p, fc, gc, cc, 6, 9);
  worker_count() = saved;
  REQUIRE(serial.size() == threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].target.linear_traction == threaded[i].target.linear_traction);
    CHECK(serial[i].feature.elevation_patch == threaded[i].feature.elevation_patch);
  }
}

TEST_CASE("episodes end within one cell of the border")
{
  const RobotParams p;
  TerrainGenConfig tg;
  const TerrainMap m = generate_map(12, tg);
  for (int e = 0; e < 10; ++e) {
    const EpisodeTrace t = run_collection_episode(m, p, {}, {}, {}, e, 4);
    REQUIRE(!t.states.empty());
    const RobotState& last = t.states.back();
    const auto& target = t.records.back().target;
    const RobotState next = step_bicycle(last, {2.0, 0.0}, target, p);
    CHECK(next.x > -m.resolution);
    CHECK(next.y > -m.resolution);
    CHECK(next.x < m.width() + m.resolution);
    CHECK(next.y < m.height() + m.resolution);
  }
}

TEST_CASE("rougher maps give higher median unevenness")
{
  const RobotParams p;
  std::vector<DatasetRecord> low;
  std::vector<DatasetRecord> high;
  for (std::uint64_t s = 0; s < 2; ++s) {
    TerrainGenConfig c1;
    TerrainGenConfig c2;
    c2.scale = 2;
    auto a = collect_episodes(generate_map(20 + s, c1), p, {}, {}, {}, 5, 1);
    auto b = collect_episodes(generate_map(40 + s, c2), p, {}, {}, {}, 5, 1);
    low.insert(low.end(), a.begin(), a.end());
    high.insert(high.end(), b.begin(), b.end());
  }
  auto median = [](const std::vector<DatasetRecord>& r) {
    std::vector<double> u;
    for (const auto& x : r) {
      u.push_back(x.unevenness);
    }
    return percentile(u, 50);
  };
  CHECK(median(high) > median(low));
}

TEST_CASE("percentile split")
{
  auto records_with = [](const std::vector<double>& u) {
    std::vector<DatasetRecord> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      out[i].unevenness = u[i];
    }
    return out;
  };
  const auto same = records_with(std::vector<double>(10, 0.3));
  const DatasetSplit s0 = split_dataset(same, same, same);
  CHECK(s0.threshold == 0.3);
  CHECK(s0.train_id.size() == 10);

  std::vector<double> spread;
  for (int i = 0; i < 101; ++i) {
    spread.push_back(i * 0.01);
  }
  const auto uniform = records_with(spread);
  const DatasetSplit s1 = split_dataset(uniform, uniform, uniform);
  CHECK(std::abs(static_cast<double>(s1.train_id.size()) - 50.5) <= 1.0);
  std::size_t ood = 0;
  for (bool b : s1.test_is_ood) {
    ood += b ? 1 : 0;
  }
  CHECK(ood + s1.train_id.size() == 101);

  const DatasetSplit s2 = split_dataset(uniform, {}, uniform, 100);
  CHECK(s2.train_id.size() == 101);
  CHECK(s2.val_id.empty());
  CHECK(std::none_of(s2.test_is_ood.begin(), s2.test_is_ood.end(), [](bool b) { return b; }));

  CHECK_THROWS_AS(split_dataset({}, uniform, uniform), DomainError);
  CHECK(percentile({1, 2, 3, 4}, 50) == 2.5);
}

TEST_CASE("dataset text round trip is lossless")
{
  TerrainGenConfig tg;
  tg.size_m = 12;
  tg.veg_fraction = 0.3;
  const auto recs = collect_episodes(generate_map(5, tg), RobotParams{}, {}, {}, {}, 3, 2);
  REQUIRE(!recs.empty());
  std::stringstream ss;
  write_dataset(ss, recs);
  const std::string text = ss.str();
  const auto back = read_dataset(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].feature.elevation_patch == recs[i].feature.elevation_patch);
    CHECK(back[i].feature.semantic_patch == recs[i].feature.semantic_patch);
    CHECK(back[i].feature.veg_patch == recs[i].feature.veg_patch);
    CHECK(back[i].feature.footprint.wheel_slopes == recs[i].feature.footprint.wheel_slopes);
    CHECK(back[i].feature.footprint.veg_ratio == recs[i].feature.footprint.veg_ratio);
    CHECK(back[i].target.pitch == recs[i].target.pitch);
    CHECK(back[i].unevenness == recs[i].unevenness);
    CHECK(back[i].episode == recs[i].episode);
  }
  std::stringstream again;
  write_dataset(again, back);
  CHECK(again.str() == text);
}
