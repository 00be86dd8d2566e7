#include "evtrav/planner.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "evtrav/text_io.hpp"

namespace evtrav
{

void PlannerConfig::validate() const
{
  require(horizon >= 1, "PlannerConfig: horizon must be at least 1");
  require(n_rollouts >= 1 && iterations >= 1, "PlannerConfig: need at least one rollout and one iteration");
  require(temperature > 0, "PlannerConfig: temperature must be positive");
  require(noise_speed >= 0 && noise_steer >= 0, "PlannerConfig: noise std must be non-negative");
  require(max_speed > 0 && max_steer > 0 && max_steer < kSteerLimit, "PlannerConfig: invalid control limits");
  require(max_roll > 0 && max_pitch > 0, "PlannerConfig: attitude limits must be positive");
  require(penalty_weight >= 0 && out_of_bounds_penalty >= 0 && ood_weight >= 0,
          "PlannerConfig: penalty weights must be non-negative");
  require(goal_radius >= 0, "PlannerConfig: goal radius must be non-negative");
}

void NavConfig::validate() const
{
  planner.validate();
  ground_truth.validate();
  require(max_steps >= 1 && stuck_steps >= 1, "NavConfig: step counts must be positive");
  require(roll_limit > 0 && pitch_limit > 0, "NavConfig: attitude limits must be positive");
}

namespace
{

Eigen::Vector2d position(const RobotState& s) { return {s.x, s.y}; }

/// Distance from the goal to the segment a -> b.
double segment_distance(const RobotState& a, const RobotState& b, const Eigen::Vector2d& goal)
{
  const Eigen::Vector2d p = position(a);
  const Eigen::Vector2d d = position(b) - p;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0 ? std::clamp((goal - p).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (p + t * d - goal).norm();
}

}  // namespace

RolloutResult rollout_cost(const ControlSequence& u, const RobotState& start, const CvarMapStack& maps,
                           const Eigen::Vector2d& goal, const RobotParams& params, const PlannerConfig& cfg)
{
  require(maps.contains(start.x, start.y), "rollout_cost: start is off the map");
  const int horizon = static_cast<int>(u.rows());
  RolloutResult r;
  r.states.reserve(static_cast<std::size_t>(horizon) + 1);
  r.states.push_back(start);
  if ((position(start) - goal).norm() <= cfg.goal_radius) {
    r.reached = true;
    return r;
  }
  const double step_length = cfg.max_speed * params.dt;
  double extra = 0;
  RobotState s = start;
  for (int t = 0; t < horizon; ++t) {
    const TraversabilitySample psi = maps.lookup(s.x, s.y, s.yaw);
    const double excess = std::max(0.0, psi.roll - cfg.max_roll) + std::max(0.0, psi.pitch - cfg.max_pitch);
    if (excess > 0) {
      r.violation = true;
      extra += cfg.penalty_weight * excess;
    }
    if (cfg.ood_weight > 0 && maps.ood_at(s.x, s.y, s.yaw)) {
      extra += cfg.ood_weight;
    }
    const RobotState next = step_bicycle(s, {u(t, 0), u(t, 1)}, psi, params);
    r.states.push_back(next);
    if (segment_distance(s, next, goal) <= cfg.goal_radius) {
      r.reached = true;
      r.cost = (t + 1) + extra;
      return r;
    }
    s = next;
    if (!maps.contains(s.x, s.y)) {
      extra += cfg.out_of_bounds_penalty;
      break;
    }
  }
  r.cost = horizon + (position(s) - goal).norm() / step_length + extra;
  return r;
}

VectorXd softmin_weights(const VectorXd& costs, double temperature)
{
  require(costs.size() > 0, "softmin_weights: empty cost vector");
  require(temperature > 0, "softmin_weights: temperature must be positive");
  const double lo = costs.minCoeff();
  VectorXd w = (-(costs.array() - lo) / temperature).exp().matrix();
  return w / w.sum();
}

ControlSequence constant_controls(int horizon, double speed, double steer)
{
  require(horizon >= 1, "constant_controls: horizon must be at least 1");
  ControlSequence u(horizon, 2);
  u.col(0).setConstant(speed);
  u.col(1).setConstant(steer);
  return u;
}

PlanResult mppi_plan(const RobotState& start, const Eigen::Vector2d& goal, const CvarMapStack& maps,
                     const ControlSequence& nominal, const RobotParams& params, const PlannerConfig& cfg,
                     std::mt19937_64& rng)
{
  require(nominal.rows() >= 1, "mppi_plan: empty nominal sequence");
  const auto n = static_cast<std::size_t>(cfg.n_rollouts);
  const Eigen::Index horizon = nominal.rows();
  auto clamp_controls = [&](ControlSequence& u) {
    u.col(0) = u.col(0).cwiseMax(0.0).cwiseMin(cfg.max_speed);
    u.col(1) = u.col(1).cwiseMax(-cfg.max_steer).cwiseMin(cfg.max_steer);
  };
  ControlSequence current = nominal;
  clamp_controls(current);
  PlanResult out;
  out.best_cost = std::numeric_limits<double>::infinity();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ControlSequence> samples(n);
  std::vector<RolloutResult> rollouts(n);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t k = 0; k < n; ++k) {
      samples[k] = current;
      if (k == 0) {
        continue;
      }
      for (Eigen::Index t = 0; t < horizon; ++t) {
        samples[k](t, 0) += cfg.noise_speed * normal(rng);
        samples[k](t, 1) += cfg.noise_steer * normal(rng);
      }
      clamp_controls(samples[k]);
    }
    parallel_for(n, [&](std::size_t k) { rollouts[k] = rollout_cost(samples[k], start, maps, goal, params, cfg); });
    VectorXd costs(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
      costs[static_cast<Eigen::Index>(k)] = rollouts[k].cost;
      if (rollouts[k].cost < out.best_cost) {
        out.best_cost = rollouts[k].cost;
        out.best_states = rollouts[k].states;
      }
    }
    const VectorXd w = softmin_weights(costs, cfg.temperature);
    ControlSequence next = ControlSequence::Zero(horizon, 2);
    for (std::size_t k = 0; k < n; ++k) {
      next += w[static_cast<Eigen::Index>(k)] * samples[k];
    }
    current = next;
  }
  const RolloutResult final_rollout = rollout_cost(current, start, maps, goal, params, cfg);
  out.controls = current;
  out.states = final_rollout.states;
  out.cost = final_rollout.cost;
  out.violation = final_rollout.violation;
  return out;
}

std::vector<GoalPair> sample_goal_pairs(const TerrainMap& map, int count, double min_dist, double max_dist,
                                        double margin, std::uint64_t seed)
{
  require(count >= 0 && min_dist >= 0 && max_dist >= min_dist, "sample_goal_pairs: invalid arguments");
  require(map.width() > 2 * margin && map.height() > 2 * margin, "sample_goal_pairs: margin too large for map");
  std::mt19937_64 rng(derive_seed(seed, {map.seed}));
  std::uniform_real_distribution<double> ux(margin, map.width() - margin);
  std::uniform_real_distribution<double> uy(margin, map.height() - margin);
  std::vector<GoalPair> pairs;
  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0; attempt < kMaxAttempts && static_cast<int>(pairs.size()) < count; ++attempt) {
    const Eigen::Vector2d a(ux(rng), uy(rng));
    const Eigen::Vector2d b(ux(rng), uy(rng));
    const double d = (b - a).norm();
    if (d < min_dist || d > max_dist) {
      continue;
    }
    pairs.push_back({{a.x(), a.y(), std::atan2(b.y() - a.y(), b.x() - a.x())}, b});
  }
  require(static_cast<int>(pairs.size()) == count, "sample_goal_pairs: could not place the requested pairs");
  return pairs;
}

std::string to_string(NavOutcome o)
{
  switch (o) {
    case NavOutcome::success:
      return "success";
    case NavOutcome::rolled_over:
      return "rolled_over";
    case NavOutcome::stuck:
      return "stuck";
    case NavOutcome::exited:
      return "exited";
    case NavOutcome::timeout:
      return "timeout";
  }
  return "unknown";
}

namespace
{

NavOutcome parse_outcome(const std::string& s)
{
  for (NavOutcome o : {NavOutcome::success, NavOutcome::rolled_over, NavOutcome::stuck, NavOutcome::exited,
                       NavOutcome::timeout}) {
    if (to_string(o) == s) {
      return o;
    }
  }
  throw DomainError("episode log: unknown outcome '" + s + "'");
}

EpisodeLog run_trial(const TerrainMap& map, const CvarMapStack& maps, const GoalPair& pair, int index,
                     const RobotParams& params, const NavConfig& cfg, std::uint64_t seed)
{
  EpisodeLog log;
  log.seed = seed;
  log.map_seed = map.seed;
  log.pair = index;
  log.alpha = maps.alpha;
  std::mt19937_64 plan_rng(derive_seed(seed, {map.seed, static_cast<std::uint64_t>(index), 1}));
  std::mt19937_64 truth_rng(derive_seed(seed, {map.seed, static_cast<std::uint64_t>(index), 2}));
  const PlannerConfig& pc = cfg.planner;
  ControlSequence nominal = constant_controls(pc.horizon, pc.max_speed);
  RobotState state = pair.start;
  log.path.push_back(state);
  if ((position(state) - pair.goal).norm() <= pc.goal_radius) {
    log.outcome = NavOutcome::success;
    return log;
  }
  int stuck = 0;
  for (int step = 0; step < cfg.max_steps; ++step) {
    const PlanResult plan = mppi_plan(state, pair.goal, maps, nominal, params, pc, plan_rng);
    const ControlInput u{plan.controls(0, 0), plan.controls(0, 1)};
    const TraversabilitySample psi = ground_truth_traversability(map, state, params, cfg.ground_truth, truth_rng);
    if (psi.roll > cfg.roll_limit || psi.pitch > cfg.pitch_limit) {
      log.outcome = NavOutcome::rolled_over;
      return log;
    }
    const RobotState next = step_bicycle(state, u, psi, params);
    log.path_length += (position(next) - position(state)).norm();
    log.steps = step + 1;
    log.path.push_back(next);
    const bool arrived = segment_distance(state, next, pair.goal) <= pc.goal_radius;
    state = next;
    if (arrived) {
      log.outcome = NavOutcome::success;
      return log;
    }
    if (!map.contains(state.x, state.y)) {
      log.outcome = NavOutcome::exited;
      return log;
    }
    stuck = psi.linear_traction < cfg.stuck_traction ? stuck + 1 : 0;
    if (stuck >= cfg.stuck_steps) {
      log.outcome = NavOutcome::stuck;
      return log;
    }
    // Warm start: shift the plan by one step and repeat its last control.
    nominal.topRows(pc.horizon - 1) = plan.controls.bottomRows(pc.horizon - 1);
    nominal.row(pc.horizon - 1) = plan.controls.row(pc.horizon - 1);
  }
  log.outcome = NavOutcome::timeout;
  return log;
}

}  // namespace

std::vector<EpisodeLog> run_navigation(const TerrainMap& map, const CvarMapStack& maps,
                                       const std::vector<GoalPair>& pairs, const RobotParams& params,
                                       const NavConfig& cfg, std::uint64_t seed, const std::string& method)
{
  cfg.validate();
  params.validate();
  require(maps.rows == map.rows() && maps.cols == map.cols(), "run_navigation: CVaR stack does not match the map");
  std::vector<EpisodeLog> logs;
  logs.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    require(map.contains(pairs[i].start.x, pairs[i].start.y), "run_navigation: start is off the map");
    logs.push_back(run_trial(map, maps, pairs[i], static_cast<int>(i), params, cfg, seed));
    logs.back().method = method;
  }
  return logs;
}

void write_episode_logs(std::ostream& out, const std::vector<EpisodeLog>& logs)
{
  out << "evtrav-episodes 1\n";
  out << "episodes " << logs.size() << "\n";
  for (const EpisodeLog& l : logs) {
    out << l.seed << ' ' << l.method << ' ' << l.map_seed << ' ' << l.pair << ' ' << format_hex(l.alpha) << ' '
        << to_string(l.outcome) << ' ' << l.steps << ' ' << format_hex(l.path_length) << '\n';
  }
}

std::vector<EpisodeLog> read_episode_logs(std::istream& in)
{
  const std::string ctx = "episode log";
  expect_token(in, "evtrav-episodes", ctx);
  require(read_integer(in, ctx) == 1, "episode log: unsupported version");
  expect_token(in, "episodes", ctx);
  const auto n = read_integer(in, ctx);
  require(n >= 0, "episode log: negative count");
  std::vector<EpisodeLog> logs(static_cast<std::size_t>(n));
  for (EpisodeLog& l : logs) {
    l.seed = static_cast<std::uint64_t>(read_integer(in, ctx));
    in >> l.method;
    l.map_seed = static_cast<std::uint64_t>(read_integer(in, ctx));
    l.pair = static_cast<int>(read_integer(in, ctx));
    l.alpha = read_double(in, ctx);
    std::string outcome;
    in >> outcome;
    require(static_cast<bool>(in), "episode log: truncated record");
    l.outcome = parse_outcome(outcome);
    l.steps = static_cast<int>(read_integer(in, ctx));
    l.path_length = read_double(in, ctx);
  }
  return logs;
}

}  // namespace evtrav
