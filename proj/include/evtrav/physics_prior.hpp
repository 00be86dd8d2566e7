#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "evtrav/distributions.hpp"

namespace evtrav
{

/// The four traversability parameters: linear and angular traction (unitless,
/// in [0, 1]) and absolute roll and pitch (radians).
enum class TravParam
{
  linear_traction = 0,
  angular_traction = 1,
  roll = 2,
  pitch = 3,
};

inline constexpr int kNumTravParams = 4;
inline constexpr std::array<TravParam, kNumTravParams> kAllTravParams = {
    TravParam::linear_traction, TravParam::angular_traction, TravParam::roll, TravParam::pitch};

inline bool is_traction(TravParam p) { return p == TravParam::linear_traction || p == TravParam::angular_traction; }
inline int index_of(TravParam p) { return static_cast<int>(p); }
std::string to_string(TravParam p);

enum class Semantic : unsigned char
{
  dirt = 0,
  veg = 1,
};

/// Terrain quantities under the four wheels. Wheels are numbered 1 = front
/// left, 2 = rear left, 3 = rear right, 4 = front right (stored 0-based).
/// Roll uses the pairs (1,4) and (2,3); pitch uses (1,2) and (4,3).
struct FootprintSample
{
  /// Absolute heading-aligned grade (rise over run) under each wheel.
  std::array<double, 4> wheel_slopes{};
  /// Terrain surface height under each wheel, meters.
  std::array<double, 4> wheel_heights{};
  /// Vegetation height under each wheel, meters; zero on dirt.
  std::array<double, 4> veg_heights{};
  /// Distances for the roll pairs (1,4), (2,3) and pitch pairs (1,2), (4,3).
  std::array<double, 2> roll_pair_distances{1.0, 1.0};
  std::array<double, 2> pitch_pair_distances{1.0, 1.0};
  double dirt_ratio = 1.0;
  double veg_ratio = 0.0;
};

struct PriorConfig
{
  /// Grade at which dirt traction reaches zero, per traction parameter.
  double max_slope_linear = std::tan(30.0 * std::numbers::pi / 180.0);
  double max_slope_angular = std::tan(15.0 * std::numbers::pi / 180.0);
  double max_veg_height = 0.2;
  double uniform_weight = 0.2;
  double prior_evidence = 12.0;

  double max_slope(TravParam p) const
  {
    return p == TravParam::angular_traction ? max_slope_angular : max_slope_linear;
  }
  void validate() const;
};

/// Discretization used for a traversability parameter.
struct ParamDiscretizations
{
  Discretization traction = Discretization::traction();
  Discretization angle = Discretization::angle();

  const Discretization& of(TravParam p) const { return is_traction(p) ? traction : angle; }
};

Pmf<> dirt_traction_prior(const FootprintSample& fp, const PriorConfig& cfg, TravParam param,
                          const Discretization& disc);
Pmf<> veg_traction_prior(const FootprintSample& fp, const PriorConfig& cfg, const Discretization& disc);
Pmf<> attitude_prior(const FootprintSample& fp, TravParam param, const Discretization& disc);

struct SemanticPriors
{
  Pmf<> dirt;
  Pmf<> veg;
};

/// Uniform-weighted blend of the per-semantic priors by footprint ratios.
Pmf<> mix_semantic(const SemanticPriors& priors, const FootprintSample& fp, const PriorConfig& cfg);

Pmf<> physics_prior_pmf(const FootprintSample& fp, TravParam param, const PriorConfig& cfg,
                        const Discretization& disc);

}  // namespace evtrav
