#include "evtrav/physics_prior.hpp"

#include <algorithm>

namespace evtrav
{

std::string to_string(TravParam p)
{
  switch (p) {
    case TravParam::linear_traction:
      return "linear_traction";
    case TravParam::angular_traction:
      return "angular_traction";
    case TravParam::roll:
      return "roll";
    case TravParam::pitch:
      return "pitch";
  }
  return "unknown";
}

void PriorConfig::validate() const
{
  require(max_slope_linear > 0 && max_slope_angular > 0, "PriorConfig: max slopes must be positive");
  require(max_veg_height > 0, "PriorConfig: max vegetation height must be positive");
  require(uniform_weight >= 0 && uniform_weight <= 1, "PriorConfig: uniform weight must lie in [0, 1]");
  require(prior_evidence > 0, "PriorConfig: prior evidence must be positive");
}

namespace
{

// Average of one-hot PMFs at the given values.
template <std::size_t N>
Pmf<> average_one_hot(const std::array<double, N>& values, const Discretization& disc)
{
  VectorXd m = VectorXd::Zero(disc.size());
  for (double v : values) {
    m[disc.bin_of(v)] += 1.0 / static_cast<double>(N);
  }
  return {m, disc};
}

std::array<double, 4> clipped_linear_law(const std::array<double, 4>& x, double x_max)
{
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = std::clamp((x_max - x[i]) / x_max, 0.0, 1.0);
  }
  return out;
}

}  // namespace

Pmf<> dirt_traction_prior(const FootprintSample& fp, const PriorConfig& cfg, TravParam param,
                          const Discretization& disc)
{
  require(is_traction(param), "dirt_traction_prior: parameter is not a traction");
  return average_one_hot(clipped_linear_law(fp.wheel_slopes, cfg.max_slope(param)), disc);
}

Pmf<> veg_traction_prior(const FootprintSample& fp, const PriorConfig& cfg, const Discretization& disc)
{
  return average_one_hot(clipped_linear_law(fp.veg_heights, cfg.max_veg_height), disc);
}

Pmf<> attitude_prior(const FootprintSample& fp, TravParam param, const Discretization& disc)
{
  require(!is_traction(param), "attitude_prior: parameter is not an attitude angle");
  const auto& h = fp.wheel_heights;
  std::array<double, 2> angles{};
  if (param == TravParam::roll) {
    require(fp.roll_pair_distances[0] > 0 && fp.roll_pair_distances[1] > 0, "attitude_prior: distances must be positive");
    angles[0] = std::abs(std::atan((h[0] - h[3]) / fp.roll_pair_distances[0]));
    angles[1] = std::abs(std::atan((h[1] - h[2]) / fp.roll_pair_distances[1]));
  } else {
    require(fp.pitch_pair_distances[0] > 0 && fp.pitch_pair_distances[1] > 0,
            "attitude_prior: distances must be positive");
    angles[0] = std::abs(std::atan((h[0] - h[1]) / fp.pitch_pair_distances[0]));
    angles[1] = std::abs(std::atan((h[3] - h[2]) / fp.pitch_pair_distances[1]));
  }
  return average_one_hot(angles, disc);
}

Pmf<> mix_semantic(const SemanticPriors& priors, const FootprintSample& fp, const PriorConfig& cfg)
{
  require(priors.dirt.disc() == priors.veg.disc(), "mix_semantic: discretizations differ");
  require(std::abs(fp.dirt_ratio + fp.veg_ratio - 1.0) <= 1e-6, "mix_semantic: semantic ratios must sum to one");
  const auto& disc = priors.dirt.disc();
  const VectorXd blended = fp.dirt_ratio * priors.dirt.masses() + fp.veg_ratio * priors.veg.masses();
  const VectorXd mixed = ((1 - cfg.uniform_weight) * blended.array() + cfg.uniform_weight / disc.size()).matrix();
  return {mixed, disc};
}

Pmf<> physics_prior_pmf(const FootprintSample& fp, TravParam param, const PriorConfig& cfg,
                        const Discretization& disc)
{
  if (is_traction(param)) {
    return mix_semantic({dirt_traction_prior(fp, cfg, param, disc), veg_traction_prior(fp, cfg, disc)}, fp, cfg);
  }
  // Attitude comes from the rigid surface under the wheels whatever covers it.
  const Pmf<> attitude = attitude_prior(fp, param, disc);
  return mix_semantic({attitude, attitude}, fp, cfg);
}

}  // namespace evtrav
