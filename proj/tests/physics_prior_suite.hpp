#pragma once

// Physics-prior checks shared by the unit tests and the acceptance runner.
// The compositional oracle below rebuilds every prior from loops over bins and
// never calls the library's prior or mixing functions.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "evtrav/physics_prior.hpp"

namespace evtrav::suite
{

struct CheckResult
{
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail
{

inline bool masses_equal(const Pmf<>& p, const Eigen::VectorXd& expected, double tol = 0.0)
{
  return (p.masses() - expected).cwiseAbs().maxCoeff() <= tol;
}

inline Eigen::VectorXd one_hot_at(const Discretization& d, int b)
{
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d.size());
  m[b] = 1;
  return m;
}

inline int oracle_bin(double value, const Discretization& d)
{
  // Linear scan for the bin whose half-open interval holds value, clamped.
  if (value <= d.lo()) {
    return 0;
  }
  for (int b = 0; b < d.size(); ++b) {
    const double upper = d.lo() + (b + 1) * (d.hi() - d.lo()) / d.size();
    if (value < upper) {
      return b;
    }
  }
  return d.size() - 1;
}

inline Eigen::VectorXd oracle_prior(const FootprintSample& fp, TravParam param, const PriorConfig& cfg,
                                    const Discretization& d)
{
  const int nb = d.size();
  auto hist = [&](const std::vector<double>& values) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(nb);
    for (double v : values) {
      m[oracle_bin(v, d)] += 1.0 / static_cast<double>(values.size());
    }
    return m;
  };
  Eigen::VectorXd dirt(nb);
  Eigen::VectorXd veg(nb);
  if (param == TravParam::linear_traction || param == TravParam::angular_traction) {
    const double s_max = param == TravParam::linear_traction ? cfg.max_slope_linear : cfg.max_slope_angular;
    std::vector<double> ds;
    std::vector<double> vs;
    for (int i = 0; i < 4; ++i) {
      double t = (s_max - fp.wheel_slopes[i]) / s_max;
      ds.push_back(t < 0 ? 0 : (t > 1 ? 1 : t));
      t = (cfg.max_veg_height - fp.veg_heights[i]) / cfg.max_veg_height;
      vs.push_back(t < 0 ? 0 : (t > 1 ? 1 : t));
    }
    dirt = hist(ds);
    veg = hist(vs);
  } else {
    const auto& h = fp.wheel_heights;
    std::vector<double> angles;
    if (param == TravParam::roll) {
      angles = {std::fabs(std::atan((h[0] - h[3]) / fp.roll_pair_distances[0])),
                std::fabs(std::atan((h[1] - h[2]) / fp.roll_pair_distances[1]))};
    } else {
      angles = {std::fabs(std::atan((h[0] - h[1]) / fp.pitch_pair_distances[0])),
                std::fabs(std::atan((h[3] - h[2]) / fp.pitch_pair_distances[1]))};
    }
    dirt = hist(angles);
    veg = dirt;
  }
  Eigen::VectorXd out(nb);
  for (int b = 0; b < nb; ++b) {
    out[b] = cfg.uniform_weight / nb + (1 - cfg.uniform_weight) * (fp.dirt_ratio * dirt[b] + fp.veg_ratio * veg[b]);
  }
  return out / out.sum();
}

inline FootprintSample random_footprint(std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> slope(0.0, 1.0);
  std::uniform_real_distribution<double> veg(0.0, 0.3);
  std::uniform_int_distribution<int> height(-512, 512);
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  FootprintSample fp;
  for (int i = 0; i < 4; ++i) {
    fp.wheel_slopes[i] = slope(rng);
    fp.veg_heights[i] = veg(rng);
    // Dyadic heights keep shifted differences exact.
    fp.wheel_heights[i] = height(rng) / 1024.0;
  }
  fp.roll_pair_distances = {dist(rng), dist(rng)};
  fp.pitch_pair_distances = {dist(rng), dist(rng)};
  fp.veg_ratio = ratio(rng);
  fp.dirt_ratio = 1 - fp.veg_ratio;
  return fp;
}

}  // namespace detail

inline std::vector<CheckResult> run_physics_prior_suite(std::size_t randomized = 10000, std::uint64_t seed = 11)
{
  using detail::masses_equal;
  using detail::one_hot_at;
  std::vector<CheckResult> out;
  auto record = [&](const std::string& name, bool ok, const std::string& detail = "") { out.push_back({name, ok, detail}); };

  const PriorConfig cfg;
  const ParamDiscretizations discs;
  const auto& td = discs.traction;
  const auto& ad = discs.angle;
  const int top = td.size() - 1;
  const double s_max = cfg.max_slope_linear;

  {
    FootprintSample fp;
    record("dirt traction: zero slope -> one-hot at 1.0",
           masses_equal(dirt_traction_prior(fp, cfg, TravParam::linear_traction, td), one_hot_at(td, top)));
    fp.wheel_slopes = {s_max, 2 * s_max, s_max, 5.0};
    record("dirt traction: slopes at or above max -> one-hot at 0.0",
           masses_equal(dirt_traction_prior(fp, cfg, TravParam::linear_traction, td), one_hot_at(td, 0)));
    fp.wheel_slopes = {0, 0, s_max, s_max};
    Eigen::VectorXd half = Eigen::VectorXd::Zero(td.size());
    half[0] = 0.5;
    half[top] = 0.5;
    record("dirt traction: two level, two at max -> 0.5 / 0.5",
           masses_equal(dirt_traction_prior(fp, cfg, TravParam::linear_traction, td), half));
  }
  {
    FootprintSample fp;
    record("veg traction: zero height -> one-hot at 1.0", masses_equal(veg_traction_prior(fp, cfg, td), one_hot_at(td, top)));
    fp.veg_heights = {0.1, 0.1, 0.1, 0.1};
    record("veg traction: half max height -> one-hot at 0.5",
           masses_equal(veg_traction_prior(fp, cfg, td), one_hot_at(td, td.bin_of(0.5))) && td.bin_of(0.5) == 6);
    fp.veg_heights = {0.3, 0.25, 0.21, 1.0};
    record("veg traction: above max height -> one-hot at 0.0", masses_equal(veg_traction_prior(fp, cfg, td), one_hot_at(td, 0)));
  }
  {
    FootprintSample fp;
    fp.wheel_heights = {0.3, 0.3, 0.3, 0.3};
    record("attitude: equal heights -> one-hot at 0 rad",
           masses_equal(attitude_prior(fp, TravParam::roll, ad), one_hot_at(ad, 0)) &&
               masses_equal(attitude_prior(fp, TravParam::pitch, ad), one_hot_at(ad, 0)));
    fp.roll_pair_distances = {0.8, 0.8};
    fp.wheel_heights = {0.8, 1.1, 0.3, 0.0};  // h1 - h4 = 0.8, h2 - h3 = 0.8
    record("attitude: rise equals run on both roll pairs -> one-hot at pi/4",
           masses_equal(attitude_prior(fp, TravParam::roll, ad), one_hot_at(ad, ad.bin_of(std::numbers::pi / 4))) &&
               ad.bin_of(std::numbers::pi / 4) == ad.size() - 1);
    fp.pitch_pair_distances = {1.5, 1.5};
    fp.wheel_heights = {0.0, 0.0, 1.5, 0.0};  // pair (1,2) level, pair (4,3) at 45 deg
    Eigen::VectorXd half = Eigen::VectorXd::Zero(ad.size());
    half[0] = 0.5;
    half[ad.size() - 1] = 0.5;
    record("attitude: one level pair, one 45 deg pair -> 0.5 / 0.5",
           masses_equal(attitude_prior(fp, TravParam::pitch, ad), half));
  }
  {
    FootprintSample fp;
    fp.dirt_ratio = 0.5;
    fp.veg_ratio = 0.5;
    Eigen::VectorXd skew = Eigen::VectorXd::Zero(td.size());
    skew[2] = 0.7;
    skew[9] = 0.3;
    const SemanticPriors priors{Pmf<>(skew, td), Pmf<>::uniform(td)};
    PriorConfig all_uniform = cfg;
    all_uniform.uniform_weight = 1;
    record("mix: uniform weight 1 -> uniform",
           masses_equal(mix_semantic(priors, fp, all_uniform), Pmf<>::uniform(td).masses(), 1e-15));
    PriorConfig none = cfg;
    none.uniform_weight = 0;
    FootprintSample dirt_only;
    record("mix: uniform weight 0, all dirt -> dirt prior", masses_equal(mix_semantic(priors, dirt_only, none), skew));
    const SemanticPriors same{Pmf<>(one_hot_at(td, 4), td), Pmf<>(one_hot_at(td, 4), td)};
    const Pmf<> mixed = mix_semantic(same, fp, cfg);
    record("mix: 0.2 uniform over one-hot -> 0.8 + 0.2/B at the bin",
           std::abs(mixed[4] - (0.8 + 0.2 / td.size())) <= 1e-15 && std::abs(mixed[0] - 0.2 / td.size()) <= 1e-15);
    FootprintSample bad;
    bad.dirt_ratio = 0.7;
    bad.veg_ratio = 0.2;
    bool threw = false;
    try {
      (void)mix_semantic(priors, bad, cfg);
    } catch (const DomainError&) {
      threw = true;
    }
    record("mix: ratios not summing to one -> domain error", threw);
  }
  {
    const FootprintSample flat;
    bool ok = true;
    for (TravParam p : kAllTravParams) {
      const auto& d = discs.of(p);
      const int b = is_traction(p) ? d.size() - 1 : 0;
      Eigen::VectorXd expected = Eigen::VectorXd::Constant(d.size(), cfg.uniform_weight / d.size());
      expected[b] += 1 - cfg.uniform_weight;
      ok = ok && masses_equal(physics_prior_pmf(flat, p, cfg, d), expected, 1e-15);
    }
    record("composition: flat dirt -> mixed one-hot at full traction / zero angle", ok);
    FootprintSample veg;
    veg.dirt_ratio = 0;
    veg.veg_ratio = 1;
    veg.veg_heights = {cfg.max_veg_height, cfg.max_veg_height, cfg.max_veg_height, cfg.max_veg_height};
    Eigen::VectorXd expected = Eigen::VectorXd::Constant(td.size(), cfg.uniform_weight / td.size());
    expected[0] += 1 - cfg.uniform_weight;
    record("composition: pure vegetation at max height -> mass at 0.0",
           masses_equal(physics_prior_pmf(veg, TravParam::linear_traction, cfg, td), expected, 1e-15) &&
               masses_equal(physics_prior_pmf(veg, TravParam::angular_traction, cfg, td), expected, 1e-15));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bump(0.0, 0.3);
  std::uniform_int_distribution<int> wheel(0, 3);
  std::uniform_int_distribution<int> shift(-4096, 4096);
  double worst_oracle = 0;
  double worst_mix = 0;
  std::size_t monotone_failures = 0;
  std::size_t shift_failures = 0;
  std::size_t invalid = 0;
  for (std::size_t k = 0; k < randomized; ++k) {
    const FootprintSample fp = detail::random_footprint(rng);
    for (TravParam p : kAllTravParams) {
      const auto& d = discs.of(p);
      const Pmf<> got = physics_prior_pmf(fp, p, cfg, d);
      worst_oracle = std::max(worst_oracle, (got.masses() - detail::oracle_prior(fp, p, cfg, d)).cwiseAbs().maxCoeff());
      if (got.masses().minCoeff() < 0 || std::abs(got.masses().sum() - 1) > 1e-9) {
        ++invalid;
      }
    }
    // Monotone traction: raising one slope or vegetation height.
    for (TravParam p : {TravParam::linear_traction, TravParam::angular_traction}) {
      FootprintSample up = fp;
      const int i = wheel(rng);
      up.wheel_slopes[i] += bump(rng);
      if (pmf_mean(physics_prior_pmf(up, p, cfg, td)) > pmf_mean(physics_prior_pmf(fp, p, cfg, td)) + 1e-12) {
        ++monotone_failures;
      }
      up = fp;
      up.veg_heights[i] += bump(rng);
      if (pmf_mean(physics_prior_pmf(up, p, cfg, td)) > pmf_mean(physics_prior_pmf(fp, p, cfg, td)) + 1e-12) {
        ++monotone_failures;
      }
    }
    // Attitude invariance to a common height offset.
    FootprintSample shifted = fp;
    const double c = shift(rng) / 1024.0;
    for (double& h : shifted.wheel_heights) {
      h += c;
    }
    for (TravParam p : {TravParam::roll, TravParam::pitch}) {
      if (attitude_prior(shifted, p, ad).masses() != attitude_prior(fp, p, ad).masses()) {
        ++shift_failures;
      }
    }
    // Mixture mean is the same convex combination of component means.
    const Pmf<> dp = dirt_traction_prior(fp, cfg, TravParam::linear_traction, td);
    const Pmf<> vp = veg_traction_prior(fp, cfg, td);
    const double expected_mean = cfg.uniform_weight * pmf_mean(Pmf<>::uniform(td)) +
                                 (1 - cfg.uniform_weight) * (fp.dirt_ratio * pmf_mean(dp) + fp.veg_ratio * pmf_mean(vp));
    worst_mix = std::max(worst_mix, std::abs(pmf_mean(mix_semantic({dp, vp}, fp, cfg)) - expected_mean));
  }
  const std::string n = std::to_string(randomized);
  record("composition: matches step-by-step oracle within 1e-12 on " + n + " footprints", worst_oracle <= 1e-12,
         "max abs diff " + std::to_string(worst_oracle));
  record("every prior is a valid PMF on " + n + " footprints", invalid == 0);
  record("traction priors monotone in slope and vegetation height on " + n + " footprints", monotone_failures == 0,
         std::to_string(monotone_failures) + " violations");
  record("attitude priors invariant to a common height shift on " + n + " footprints", shift_failures == 0,
         std::to_string(shift_failures) + " violations");
  record("mixture mean is the convex combination of component means", worst_mix <= 1e-12,
         "max abs diff " + std::to_string(worst_mix));
  return out;
}

}  // namespace evtrav::suite
