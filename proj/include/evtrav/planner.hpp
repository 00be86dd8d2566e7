#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "evtrav/cvar_map.hpp"
#include "evtrav/simulator.hpp"

namespace evtrav
{

struct PlannerConfig
{
  int horizon = 50;
  int n_rollouts = 1024;
  int iterations = 1;
  /// In cost units, i.e. steps.
  double temperature = 0.1;
  double noise_speed = 0.3;
  double noise_steer = 0.3;
  /// Planner speed and steering limits; the time step comes from RobotParams.
  double max_speed = 1.0;
  double max_steer = 30.0 * std::numbers::pi / 180.0;
  double max_roll = 30.0 * std::numbers::pi / 180.0;
  double max_pitch = 30.0 * std::numbers::pi / 180.0;
  /// Per radian of CVaR attitude above the limit, per step.
  double penalty_weight = 100.0;
  double out_of_bounds_penalty = 1000.0;
  /// Per step spent on an OOD-flagged cell; zero disables avoidance.
  double ood_weight = 0.0;
  double goal_radius = 1.0;

  void validate() const;
};

/// Controls as rows (speed, steer), one per horizon step.
using ControlSequence = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct RolloutResult
{
  double cost = 0;
  std::vector<RobotState> states;
  bool violation = false;
  bool reached = false;
};

/// Rolls the CVaR-parameterized bicycle forward and scores it: steps to reach
/// the goal (else T plus the remaining distance in max-speed steps), attitude
/// penalties, bound exit and optional OOD cost.
RolloutResult rollout_cost(const ControlSequence& u, const RobotState& start, const CvarMapStack& maps,
                           const Eigen::Vector2d& goal, const RobotParams& params, const PlannerConfig& cfg);

/// exp(-(c - min c) / temperature), normalized.
VectorXd softmin_weights(const VectorXd& costs, double temperature);

struct PlanResult
{
  ControlSequence controls;
  std::vector<RobotState> states;
  double cost = 0;
  bool violation = false;
  std::vector<RobotState> best_states;
  double best_cost = 0;
};

/// Sample 0 is the unperturbed nominal; noise is drawn serially before the
/// rollouts are evaluated in parallel.
PlanResult mppi_plan(const RobotState& start, const Eigen::Vector2d& goal, const CvarMapStack& maps,
                     const ControlSequence& nominal, const RobotParams& params, const PlannerConfig& cfg,
                     std::mt19937_64& rng);

ControlSequence constant_controls(int horizon, double speed, double steer = 0);

struct GoalPair
{
  RobotState start;
  Eigen::Vector2d goal;
};

/// Random start-goal pairs at least `margin` from the border, separated by a
/// distance in [min_dist, max_dist]; the start faces the goal.
std::vector<GoalPair> sample_goal_pairs(const TerrainMap& map, int count, double min_dist, double max_dist,
                                        double margin, std::uint64_t seed);

enum class NavOutcome
{
  success,
  rolled_over,
  stuck,
  exited,
  timeout,
};
std::string to_string(NavOutcome o);

struct NavConfig
{
  PlannerConfig planner;
  GroundTruthConfig ground_truth;
  int max_steps = 400;
  double roll_limit = 30.0 * std::numbers::pi / 180.0;
  double pitch_limit = 30.0 * std::numbers::pi / 180.0;
  double stuck_traction = 0.05;
  int stuck_steps = 20;

  void validate() const;
};

struct EpisodeLog
{
  std::uint64_t seed = 0;
  std::string method;
  std::uint64_t map_seed = 0;
  int pair = 0;
  double alpha = 1;
  NavOutcome outcome = NavOutcome::timeout;
  int steps = 0;
  double path_length = 0;
  std::vector<RobotState> path;
};

/// Closed loop: plan on the stack every step, execute the first control under
/// sampled ground truth. Trials run in order; pair i draws from (seed, map, i).
std::vector<EpisodeLog> run_navigation(const TerrainMap& map, const CvarMapStack& maps,
                                       const std::vector<GoalPair>& pairs, const RobotParams& params,
                                       const NavConfig& cfg, std::uint64_t seed, const std::string& method);

/// One line per trial: seed method map_seed pair alpha outcome steps path_length.
void write_episode_logs(std::ostream& out, const std::vector<EpisodeLog>& logs);
std::vector<EpisodeLog> read_episode_logs(std::istream& in);

}  // namespace evtrav
