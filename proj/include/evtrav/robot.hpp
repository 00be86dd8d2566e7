#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "evtrav/common.hpp"

namespace evtrav
{

struct RobotParams
{
  double wheelbase = 1.5;
  double track_width = 1.0;
  double dt = 0.1;
  double max_speed = 2.0;
  double max_steer = 30.0 * std::numbers::pi / 180.0;

  /// Body-frame wheel positions (x forward, y left) ordered front left, rear
  /// left, rear right, front right.
  std::array<Eigen::Vector2d, 4> wheel_positions() const
  {
    const double hx = wheelbase / 2;
    const double hy = track_width / 2;
    return {Eigen::Vector2d(hx, hy), Eigen::Vector2d(-hx, hy), Eigen::Vector2d(-hx, -hy), Eigen::Vector2d(hx, -hy)};
  }

  void validate() const
  {
    require(wheelbase > 0 && track_width > 0, "RobotParams: dimensions must be positive");
    require(dt > 0, "RobotParams: time step must be positive");
    require(max_speed > 0, "RobotParams: max speed must be positive");
    require(max_steer > 0 && max_steer < std::numbers::pi / 2, "RobotParams: max steer must lie in (0, 90deg)");
  }
};

struct RobotState
{
  double x = 0;
  double y = 0;
  double yaw = 0;
};

struct ControlInput
{
  double speed = 0;
  double steer = 0;
};

/// Realized traversability: traction ratios in [0, 1] and absolute roll and
/// pitch in radians.
struct TraversabilitySample
{
  double linear_traction = 1;
  double angular_traction = 1;
  double roll = 0;
  double pitch = 0;

  double operator[](int i) const
  {
    switch (i) {
      case 0:
        return linear_traction;
      case 1:
        return angular_traction;
      case 2:
        return roll;
      default:
        return pitch;
    }
  }
};

inline constexpr double kSteerLimit = std::numbers::pi / 2 - 1e-6;

/// Kinematic bicycle step with traction-scaled translation and yaw rate.
inline RobotState step_bicycle(const RobotState& s, const ControlInput& u, const TraversabilitySample& psi,
                               const RobotParams& params)
{
  const double steer = std::clamp(u.steer, -kSteerLimit, kSteerLimit);
  const double advance = params.dt * psi.linear_traction * u.speed;
  return {s.x + advance * std::cos(s.yaw), s.y + advance * std::sin(s.yaw),
          s.yaw + params.dt * psi.angular_traction * u.speed * std::tan(steer) / params.wheelbase};
}

}  // namespace evtrav
