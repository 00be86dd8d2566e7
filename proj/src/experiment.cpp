#include "evtrav/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evtrav/text_io.hpp"

namespace evtrav
{

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Methods

const std::vector<MethodSpec>& learned_methods()
{
  static const std::vector<MethodSpec> methods{
      {"physics_evidential", PosteriorPrior::physics, EvidenceSource::flow, true, 0},
      {"uniform_evidential", PosteriorPrior::uniform, EvidenceSource::flow, false, 0},
      {"physics_informed", PosteriorPrior::uniform, EvidenceSource::fixed, true, 1e-6},
      {"vanilla", PosteriorPrior::uniform, EvidenceSource::fixed, false, 1e-6},
      {"prior_only_evidential", PosteriorPrior::physics, EvidenceSource::flow, false, 0},
      {"upi_only_evidential", PosteriorPrior::uniform, EvidenceSource::flow, true, 0},
  };
  return methods;
}

const MethodSpec& find_method(const std::string& name)
{
  for (const MethodSpec& m : learned_methods()) {
    if (m.name == name) {
      return m;
    }
  }
  throw DomainError("unknown method '" + name + "'");
}

EvidentialConfig method_config(const EvidentialConfig& base, const MethodSpec& m, std::uint64_t seed)
{
  EvidentialConfig c = base;
  c.posterior_prior = m.posterior_prior;
  c.evidence = m.evidence;
  c.kappa = m.physics_regularizer ? base.kappa : 0.0;
  if (m.prior_evidence > 0) {
    c.prior_evidence = m.prior_evidence;
  }
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Configuration

EvidentialConfig ExperimentConfig::default_model()
{
  EvidentialConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 80;
  c.kappa = 0.5;
  return c;
}

std::vector<std::string> ExperimentConfig::learned_method_names() const
{
  if (!methods.empty()) {
    return methods;
  }
  std::vector<std::string> names;
  for (const MethodSpec& m : learned_methods()) {
    names.push_back(m.name);
  }
  return names;
}

void ExperimentConfig::validate() const
{
  require(!train_maps.empty() && !val_maps.empty() && !test_maps.empty(), "config: every map group needs a seed");
  require(train_scale >= 0 && test_scale >= 0 && probe_scale >= 0, "config: scales must be non-negative");
  require(episodes_per_map >= 1, "config: episodes_per_map must be at least 1");
  require(split_percentile >= 0 && split_percentile <= 100, "config: split_percentile must lie in [0, 100]");
  require(!seeds.empty(), "config: need at least one seed");
  for (const std::string& m : methods) {
    find_method(m);
  }
  require(probe_poses >= 1 && probe_factor > 0, "config: invalid fallback probe settings");
  require(unevenness_edges.size() >= 2 && std::is_sorted(unevenness_edges.begin(), unevenness_edges.end()),
          "config: unevenness_edges must be increasing");
  require(!alphas.empty(), "config: need at least one alpha");
  for (double a : alphas) {
    require(a > 0 && a <= 1, "config: alphas must lie in (0, 1]");
  }
  require(pairs_per_map >= 1 && n_yaw >= 1 && ood_weight >= 0, "config: invalid navigation settings");
  model.validate();
  collect.validate();
  truth.validate();
  nav.validate();
  robot.validate();
}

namespace
{

/// Reads fields from a JSON object and rejects keys nobody asked for.
class JsonReader
{
public:
  JsonReader(const json& j, std::string context) : j_(j), context_(std::move(context))
  {
    require(j.is_object(), "config: '" + context_ + "' must be an object");
  }
  ~JsonReader() noexcept(false)
  {
    if (std::uncaught_exceptions() == 0) {
      for (const auto& item : j_.items()) {
        require(seen_.count(item.key()) > 0, "config: unknown key '" + context_ + "." + item.key() + "'");
      }
    }
  }

  template <typename T>
  void operator()(const std::string& key, T& out)
  {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return;
    }
    try {
      if constexpr (std::is_same_v<T, PosteriorPrior>) {
        out = parse_posterior_prior(j_.at(key).get<std::string>());
      } else if constexpr (std::is_same_v<T, EvidenceSource>) {
        out = parse_evidence_source(j_.at(key).get<std::string>());
      } else {
        out = j_.at(key).get<T>();
      }
    } catch (const json::exception& e) {
      throw DomainError("config: bad value for '" + context_ + "." + key + "': " + e.what());
    }
  }

  template <typename T, typename Fn>
  void nested(const std::string& key, T& out, Fn&& visit_fields)
  {
    seen_.insert(key);
    if (j_.contains(key)) {
      JsonReader inner(j_.at(key), context_ + "." + key);
      visit_fields(inner, out);
    }
  }

private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

class JsonWriter
{
public:
  template <typename T>
  void operator()(const std::string& key, T& value)
  {
    if constexpr (std::is_same_v<T, PosteriorPrior> || std::is_same_v<T, EvidenceSource>) {
      j[key] = to_string(value);
    } else {
      j[key] = value;
    }
  }

  template <typename T, typename Fn>
  void nested(const std::string& key, T& value, Fn&& visit_fields)
  {
    JsonWriter inner;
    visit_fields(inner, value);
    j[key] = inner.j;
  }

  json j = json::object();
};

template <typename V>
void visit_terrain(V& v, TerrainGenConfig& c)
{
  v("size_m", c.size_m);
  v("resolution", c.resolution);
  v("veg_fraction", c.veg_fraction);
  v("rock_amplitude", c.rock_amplitude);
  v("hill_amplitude", c.hill_amplitude);
  v("max_veg_height", c.max_veg_height);
}

template <typename V>
void visit_collect(V& v, CollectConfig& c)
{
  v("speed", c.speed);
  v("steer_amplitude", c.steer_amplitude);
  v("steer_period", c.steer_period);
  v("max_steps", c.max_steps);
  v("attitude_limit", c.attitude_limit);
  v("stuck_traction", c.stuck_traction);
  v("stuck_steps", c.stuck_steps);
  v("start_margin", c.start_margin);
}

template <typename V>
void visit_truth(V& v, GroundTruthConfig& c)
{
  v("exponent", c.exponent);
  v("concentration", c.concentration);
  v("max_slope_linear", c.max_slope_linear);
  v("max_slope_angular", c.max_slope_angular);
  v("max_veg_height", c.max_veg_height);
  v("attitude_noise", c.attitude_noise);
  v("contact_radius", c.contact_radius);
  v("noise", c.noise);
}

template <typename V>
void visit_prior(V& v, PriorConfig& c)
{
  v("max_slope_linear", c.max_slope_linear);
  v("max_slope_angular", c.max_slope_angular);
  v("max_veg_height", c.max_veg_height);
  v("uniform_weight", c.uniform_weight);
  v("prior_evidence", c.prior_evidence);
}

template <typename V>
void visit_features(V& v, FeatureConfig& c)
{
  v("patch_size", c.patch_size);
  v("patch_spacing", c.patch_spacing);
  v("footprint_samples", c.footprint_samples);
}

template <typename V>
void visit_model(V& v, EvidentialConfig& c)
{
  v("latent_dim", c.latent_dim);
  v("certainty_budget", c.certainty_budget);
  v("prior_evidence", c.prior_evidence);
  v("kappa", c.kappa);
  v("entropy_weight", c.entropy_weight);
  v("entropy_sign", c.entropy_sign);
  v("learning_rate", c.learning_rate);
  v("epochs", c.epochs);
  v("batch_size", c.batch_size);
  v("num_bins", c.num_bins);
  v("encoder_widths", c.encoder_widths);
  v("encoder_output_tanh", c.encoder_output_tanh);
  v("decoder_hidden", c.decoder_hidden);
  v("head_hidden", c.head_hidden);
  v("flow_couplings", c.flow_couplings);
  v("flow_hidden", c.flow_hidden);
  v("fixed_evidence", c.fixed_evidence);
  v("flow_grad_to_encoder", c.flow_grad_to_encoder);
  v("warmup_steps", c.warmup_steps);
  v("grad_clip", c.grad_clip);
  v("ood_percentile", c.ood_percentile);
  v.nested("prior", c.prior, [](auto& w, PriorConfig& p) { visit_prior(w, p); });
  v.nested("features", c.features, [](auto& w, FeatureConfig& f) { visit_features(w, f); });
}

template <typename V>
void visit_planner(V& v, PlannerConfig& c)
{
  v("horizon", c.horizon);
  v("n_rollouts", c.n_rollouts);
  v("iterations", c.iterations);
  v("temperature", c.temperature);
  v("noise_speed", c.noise_speed);
  v("noise_steer", c.noise_steer);
  v("max_speed", c.max_speed);
  v("max_steer", c.max_steer);
  v("max_roll", c.max_roll);
  v("max_pitch", c.max_pitch);
  v("penalty_weight", c.penalty_weight);
  v("out_of_bounds_penalty", c.out_of_bounds_penalty);
  v("goal_radius", c.goal_radius);
}

template <typename V>
void visit_nav(V& v, NavConfig& c)
{
  v.nested("planner", c.planner, [](auto& w, PlannerConfig& p) { visit_planner(w, p); });
  v("max_steps", c.max_steps);
  v("roll_limit", c.roll_limit);
  v("pitch_limit", c.pitch_limit);
  v("stuck_traction", c.stuck_traction);
  v("stuck_steps", c.stuck_steps);
}

template <typename V>
void visit_robot(V& v, RobotParams& c)
{
  v("wheelbase", c.wheelbase);
  v("track_width", c.track_width);
  v("dt", c.dt);
  v("max_speed", c.max_speed);
  v("max_steer", c.max_steer);
}

template <typename V>
void visit_experiment(V& v, ExperimentConfig& c)
{
  v("train_maps", c.train_maps);
  v("val_maps", c.val_maps);
  v("test_maps", c.test_maps);
  v("train_scale", c.train_scale);
  v("test_scale", c.test_scale);
  v.nested("terrain", c.terrain, [](auto& w, TerrainGenConfig& t) { visit_terrain(w, t); });
  v("episodes_per_map", c.episodes_per_map);
  v("collect_seed", c.collect_seed);
  v.nested("collect", c.collect, [](auto& w, CollectConfig& t) { visit_collect(w, t); });
  v.nested("ground_truth", c.truth, [](auto& w, GroundTruthConfig& t) { visit_truth(w, t); });
  v("split_percentile", c.split_percentile);
  v.nested("model", c.model, [](auto& w, EvidentialConfig& t) { visit_model(w, t); });
  v("seeds", c.seeds);
  v("methods", c.methods);
  v("probe_scale", c.probe_scale);
  v("probe_map", c.probe_map);
  v("probe_poses", c.probe_poses);
  v("probe_factor", c.probe_factor);
  v("unevenness_edges", c.unevenness_edges);
  v("alphas", c.alphas);
  v("pairs_per_map", c.pairs_per_map);
  v("pair_min_distance", c.pair_min_distance);
  v("pair_max_distance", c.pair_max_distance);
  v("pair_margin", c.pair_margin);
  v("pair_seed", c.pair_seed);
  v("n_yaw", c.n_yaw);
  v.nested("nav", c.nav, [](auto& w, NavConfig& t) { visit_nav(w, t); });
  v("ood_weight", c.ood_weight);
  v.nested("robot", c.robot, [](auto& w, RobotParams& t) { visit_robot(w, t); });
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text, const ExperimentConfig& base)
{
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg = base;
  {
    JsonReader reader(j, "config");
    visit_experiment(reader, cfg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path)
{
  std::ifstream in = open_for_reading(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_json(const ExperimentConfig& cfg)
{
  ExperimentConfig copy = cfg;
  JsonWriter writer;
  visit_experiment(writer, copy);
  return writer.j.dump(2) + "\n";
}

bool& pipeline_progress()
{
  static bool on = true;
  return on;
}

// ---------------------------------------------------------------------------
// Files

fs::path Workspace::map_file(std::uint64_t seed) const { return root / "maps" / ("map_" + std::to_string(seed) + ".txt"); }
fs::path Workspace::pool_file(const std::string& which) const { return root / "data" / (which + ".txt"); }
fs::path Workspace::split_file() const { return root / "data" / "split.txt"; }
fs::path Workspace::checkpoint_file(const std::string& method, std::uint64_t seed) const
{
  return root / "models" / (method + "_seed" + std::to_string(seed) + ".ckpt");
}
fs::path Workspace::curves_file(const std::string& method, std::uint64_t seed) const
{
  return root / "models" / (method + "_seed" + std::to_string(seed) + "_curves.csv");
}
fs::path Workspace::result_file(const std::string& name) const { return root / "results" / name; }

namespace
{

constexpr int kSchemaVersion = 1;

void require_input(const fs::path& path, const std::string& stage)
{
  require(fs::exists(path), "missing input " + path.string() + "; run the '" + stage + "' stage first");
}

std::string fixed(double v, int digits = 6)
{
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// CSV with a schema-version column in front of every row.
class CsvWriter
{
public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header)
  {
    fs::create_directories(path.parent_path());
    out_ = open_for_writing(path.string());
    out_ << "schema";
    for (const std::string& h : header) {
      out_ << ',' << h;
    }
    out_ << '\n';
  }
  void row(const std::vector<std::string>& cells)
  {
    out_ << kSchemaVersion;
    for (const std::string& c : cells) {
      out_ << ',' << c;
    }
    out_ << '\n';
  }

private:
  std::ofstream out_;
};

double mean_of(const std::vector<double>& v)
{
  if (v.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double s = 0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation; zero for a single value.
double std_of(const std::vector<double>& v)
{
  if (v.size() < 2) {
    return 0;
  }
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) {
    s += (x - m) * (x - m);
  }
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v)
{
  if (v.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void log_progress(const std::string& msg)
{
  if (pipeline_progress()) {
    std::clog << "[evtrav] " << msg << std::endl;
  }
}

}  // namespace

MapSummary summarize_map(const TerrainMap& map)
{
  MapSummary s;
  s.seed = map.seed;
  s.scale = map.scale;
  const MatrixXd& e = map.elevation;
  s.elevation_std = std::sqrt((e.array() - e.mean()).square().mean());
  double grade = 0;
  long count = 0;
  for (Eigen::Index r = 1; r + 1 < e.rows(); ++r) {
    for (Eigen::Index c = 1; c + 1 < e.cols(); ++c) {
      const double gx = (e(r, c + 1) - e(r, c - 1)) / (2 * map.resolution);
      const double gy = (e(r + 1, c) - e(r - 1, c)) / (2 * map.resolution);
      grade += std::hypot(gx, gy);
      ++count;
    }
  }
  s.mean_grade = count > 0 ? grade / static_cast<double>(count) : 0.0;
  s.veg_fraction = map.semantic.cast<double>().mean();
  return s;
}

namespace
{

void write_map_summary(const fs::path& path, const std::vector<MapSummary>& rows)
{
  CsvWriter csv(path, {"seed", "scale", "elevation_std", "mean_grade", "veg_fraction"});
  for (const MapSummary& s : rows) {
    csv.row({std::to_string(s.seed), fixed(s.scale), fixed(s.elevation_std), fixed(s.mean_grade), fixed(s.veg_fraction)});
  }
}

TerrainGenConfig scaled(TerrainGenConfig t, double scale)
{
  t.scale = scale;
  return t;
}

}  // namespace

std::vector<MapSummary> generate_map_files(std::uint64_t seed, int n, double scale, const TerrainGenConfig& terrain,
                                           const fs::path& out_dir)
{
  require(n >= 1, "gen-maps: need at least one map");
  fs::create_directories(out_dir);
  std::vector<MapSummary> rows;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const TerrainMap map = generate_map(s, scaled(terrain, scale));
    save_terrain((out_dir / ("map_" + std::to_string(s) + ".txt")).string(), map);
    rows.push_back(summarize_map(map));
  }
  write_map_summary(out_dir / "maps_summary.csv", rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Stages

void stage_gen_maps(const ExperimentConfig& cfg, const Workspace& ws)
{
  fs::create_directories(ws.root / "maps");
  std::vector<MapSummary> rows;
  auto emit = [&](const std::vector<std::uint64_t>& seeds, double scale) {
    for (std::uint64_t s : seeds) {
      const TerrainMap map = generate_map(s, scaled(cfg.terrain, scale));
      save_terrain(ws.map_file(s).string(), map);
      rows.push_back(summarize_map(map));
    }
  };
  emit(cfg.train_maps, cfg.train_scale);
  emit(cfg.val_maps, cfg.train_scale);
  emit(cfg.test_maps, cfg.test_scale);
  write_map_summary(ws.root / "maps" / "maps_summary.csv", rows);
  log_progress("wrote " + std::to_string(rows.size()) + " maps");
}

void stage_collect(const ExperimentConfig& cfg, const Workspace& ws)
{
  auto pool = [&](const std::vector<std::uint64_t>& seeds) {
    std::vector<DatasetRecord> out;
    for (std::uint64_t s : seeds) {
      require_input(ws.map_file(s), "gen-maps");
      const TerrainMap map = load_terrain(ws.map_file(s).string());
      const auto recs = collect_episodes(map, cfg.robot, cfg.model.features, cfg.truth, cfg.collect,
                                         cfg.episodes_per_map, cfg.collect_seed);
      out.insert(out.end(), recs.begin(), recs.end());
    }
    return out;
  };
  const DatasetSplit split = split_dataset(pool(cfg.train_maps), pool(cfg.val_maps), pool(cfg.test_maps),
                                           cfg.split_percentile);
  fs::create_directories(ws.root / "data");
  save_dataset(ws.pool_file("train_id").string(), split.train_id);
  save_dataset(ws.pool_file("val_id").string(), split.val_id);
  save_dataset(ws.pool_file("test").string(), split.test);
  std::ofstream out = open_for_writing(ws.split_file().string());
  out << "evtrav-split 1\nthreshold " << format_hex(split.threshold) << "\n";
  log_progress("collected train " + std::to_string(split.train_id.size()) + ", val " +
               std::to_string(split.val_id.size()) + ", test " + std::to_string(split.test.size()) + " records");
}

DatasetSplit load_split(const Workspace& ws)
{
  for (const char* which : {"train_id", "val_id", "test"}) {
    require_input(ws.pool_file(which), "collect");
  }
  require_input(ws.split_file(), "collect");
  DatasetSplit split;
  std::ifstream in = open_for_reading(ws.split_file().string());
  expect_token(in, "evtrav-split", "split file");
  require(read_integer(in, "split file") == 1, "split file: unsupported version");
  expect_token(in, "threshold", "split file");
  split.threshold = read_double(in, "split file");
  split.train_id = load_dataset(ws.pool_file("train_id").string());
  split.val_id = load_dataset(ws.pool_file("val_id").string());
  split.test = load_dataset(ws.pool_file("test").string());
  for (const DatasetRecord& r : split.test) {
    split.test_is_ood.push_back(r.unevenness > split.threshold);
  }
  return split;
}

void stage_train(const ExperimentConfig& cfg, const Workspace& ws, std::vector<std::string> methods,
                 std::vector<std::uint64_t> seeds)
{
  if (methods.empty()) {
    methods = cfg.learned_method_names();
  }
  if (seeds.empty()) {
    seeds = cfg.seeds;
  }
  const DatasetSplit split = load_split(ws);
  const PreparedData train_data = prepare_data(split.train_id, cfg.model);
  const PreparedData val_data = prepare_data(split.val_id, cfg.model);
  fs::create_directories(ws.root / "models");
  for (const std::string& name : methods) {
    const MethodSpec& m = find_method(name);
    for (std::uint64_t seed : seeds) {
      const EvidentialConfig mc = method_config(cfg.model, m, seed);
      EvidentialModel model(mc, static_cast<int>(train_data.inputs.rows()));
      const TrainingCurves curves = train(model, train_data, val_data);
      model.to_checkpoint().save(ws.checkpoint_file(name, seed).string());
      CsvWriter csv(ws.curves_file(name, seed), {"epoch", "phase", "train_loss", "train_emd2", "val_emd2"});
      const int warmup = warmup_epochs(mc, train_data.size());
      for (std::size_t e = 0; e < curves.train_loss.size(); ++e) {
        csv.row({std::to_string(e), static_cast<int>(e) < warmup ? "warmup" : "joint", fixed(curves.train_loss[e]),
                 fixed(curves.train_emd2[e]), fixed(curves.val_emd2[e])});
      }
      log_progress("trained " + name + " seed " + std::to_string(seed) + " (best epoch " +
                   std::to_string(curves.best_epoch) + ", val EMD2 " +
                   fixed(curves.val_emd2[static_cast<std::size_t>(curves.best_epoch)], 4) + ")");
    }
  }
}

namespace
{

EvidentialModel load_model(const ExperimentConfig& cfg, const Workspace& ws, const std::string& method,
                           std::uint64_t seed)
{
  const fs::path path = ws.checkpoint_file(method, seed);
  require_input(path, "train");
  return EvidentialModel::from_checkpoint(Checkpoint::load(path.string()),
                                          method_config(cfg.model, find_method(method), seed));
}

struct ErrorSummary
{
  double overall = 0;
  double id = 0;
  double ood = 0;
};

ErrorSummary summarize_errors(const VectorXd& errors, const std::vector<bool>& is_ood)
{
  std::vector<double> all;
  std::vector<double> id;
  std::vector<double> ood;
  for (Eigen::Index i = 0; i < errors.size(); ++i) {
    all.push_back(errors[i]);
    (is_ood[static_cast<std::size_t>(i)] ? ood : id).push_back(errors[i]);
  }
  return {mean_of(all), mean_of(id), mean_of(ood)};
}

std::array<MatrixXd, kNumTravParams> uniform_pmfs(const EvidentialConfig& cfg, Eigen::Index n)
{
  std::array<MatrixXd, kNumTravParams> out;
  for (auto& m : out) {
    m = MatrixXd::Constant(cfg.num_bins, n, 1.0 / cfg.num_bins);
  }
  return out;
}

/// Mean over probes of the per-parameter-averaged L1 distance.
double mean_l1_gap(const std::array<MatrixXd, kNumTravParams>& a, const std::array<MatrixXd, kNumTravParams>& b)
{
  double total = 0;
  for (std::size_t k = 0; k < kNumTravParams; ++k) {
    total += (a[k] - b[k]).cwiseAbs().colwise().sum().mean();
  }
  return total / kNumTravParams;
}

std::vector<DatasetRecord> fallback_probes(const ExperimentConfig& cfg, double threshold)
{
  const TerrainMap map = generate_map(cfg.probe_map, scaled(cfg.terrain, cfg.probe_scale));
  std::mt19937_64 rng(derive_seed(cfg.probe_map, {7}));
  const double margin = 2.0;
  std::uniform_real_distribution<double> ux(margin, map.width() - margin);
  std::uniform_real_distribution<double> uy(margin, map.height() - margin);
  std::uniform_real_distribution<double> uyaw(-std::numbers::pi, std::numbers::pi);
  std::vector<DatasetRecord> probes;
  for (int i = 0; i < cfg.probe_poses; ++i) {
    const RobotState pose{ux(rng), uy(rng), uyaw(rng)};
    DatasetRecord r;
    r.feature = extract_feature(map, pose, cfg.robot, cfg.model.features);
    r.unevenness = r.feature.unevenness();
    if (r.unevenness >= cfg.probe_factor * threshold) {
      probes.push_back(std::move(r));
    }
  }
  return probes;
}

}  // namespace

void stage_eval_learning(const ExperimentConfig& cfg, const Workspace& ws)
{
  const DatasetSplit split = load_split(ws);
  require(!split.test.empty(), "eval-learning: empty test set");
  const PreparedData test = prepare_data(split.test, cfg.model);
  const auto n = static_cast<Eigen::Index>(test.size());

  // Per-method, per-seed record errors; references repeat across seeds.
  std::vector<std::string> names{kPhysicsPriorMethod, kUniformPriorMethod};
  for (const std::string& m : cfg.learned_method_names()) {
    names.push_back(m);
  }
  std::map<std::string, std::vector<VectorXd>> errors;
  errors[kPhysicsPriorMethod].assign(cfg.seeds.size(), record_emd2(test.physics, test.targets));
  errors[kUniformPriorMethod].assign(cfg.seeds.size(), record_emd2(uniform_pmfs(cfg.model, n), test.targets));

  const std::vector<DatasetRecord> probes = fallback_probes(cfg, split.threshold);
  require(!probes.empty(), "eval-learning: no fallback probes above the unevenness cut; raise probe_scale");
  const PreparedData probe_data = prepare_data(probes, cfg.model);
  const auto uniform_probe = uniform_pmfs(cfg.model, static_cast<Eigen::Index>(probe_data.size()));
  CsvWriter fallback(ws.result_file("fallback.csv"),
                     {"method", "seed", "probes", "probe_unevenness_min", "gap_physics_prior", "gap_uniform"});
  double probe_min = std::numeric_limits<double>::infinity();
  for (const DatasetRecord& r : probes) {
    probe_min = std::min(probe_min, r.unevenness);
  }

  for (const std::string& name : cfg.learned_method_names()) {
    for (std::uint64_t seed : cfg.seeds) {
      const EvidentialModel model = load_model(cfg, ws, name, seed);
      errors[name].push_back(record_emd2(model.expected_pmfs(test.inputs, test.physics), test.targets));
      const auto expected = model.expected_pmfs(probe_data.inputs, probe_data.physics);
      fallback.row({name, std::to_string(seed), std::to_string(probes.size()), fixed(probe_min),
                    fixed(mean_l1_gap(expected, probe_data.physics)), fixed(mean_l1_gap(expected, uniform_probe))});
    }
  }

  CsvWriter runs(ws.result_file("learning_runs.csv"), {"method", "seed", "overall", "id", "ood"});
  CsvWriter table(ws.result_file("learning.csv"),
                  {"method", "seeds", "overall_mean", "overall_std", "id_mean", "id_std", "ood_mean", "ood_std"});
  for (const std::string& name : names) {
    std::vector<double> overall;
    std::vector<double> id;
    std::vector<double> ood;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      const ErrorSummary e = summarize_errors(errors[name][s], split.test_is_ood);
      runs.row({name, std::to_string(cfg.seeds[s]), fixed(e.overall), fixed(e.id), fixed(e.ood)});
      overall.push_back(e.overall);
      id.push_back(e.id);
      ood.push_back(e.ood);
    }
    table.row({name, std::to_string(cfg.seeds.size()), fixed(mean_of(overall)), fixed(std_of(overall)),
               fixed(mean_of(id)), fixed(std_of(id)), fixed(mean_of(ood)), fixed(std_of(ood))});
  }

  // Error against unevenness, bins in multiples of the ID threshold.
  CsvWriter bins(ws.result_file("unevenness_bins.csv"), {"method", "bin_lo", "bin_hi", "records", "mean_emd2"});
  const auto& edges = cfg.unevenness_edges;
  for (const std::string& name : names) {
    for (std::size_t b = 0; b < edges.size(); ++b) {
      const double lo = edges[b];
      const double hi = b + 1 < edges.size() ? edges[b + 1] : std::numeric_limits<double>::infinity();
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        const double u = split.test[i].unevenness / split.threshold;
        if (u >= lo && u < hi) {
          members.push_back(i);
        }
      }
      std::vector<double> per_seed;
      for (const VectorXd& e : errors[name]) {
        std::vector<double> v;
        for (std::size_t i : members) {
          v.push_back(e[static_cast<Eigen::Index>(i)]);
        }
        if (!v.empty()) {
          per_seed.push_back(mean_of(v));
        }
      }
      bins.row({name, fixed(lo, 2), fixed(hi, 2), std::to_string(members.size()), fixed(mean_of(per_seed))});
    }
  }
  log_progress("evaluated " + std::to_string(names.size()) + " methods on " + std::to_string(test.size()) +
               " test records, " + std::to_string(probes.size()) + " fallback probes");
}

void stage_bench_nav(const ExperimentConfig& cfg, const Workspace& ws)
{
  struct Trial
  {
    std::string method;
    double alpha;
    EpisodeLog log;
  };
  std::vector<Trial> trials;
  const auto discs = cfg.model.discretizations();
  for (std::uint64_t map_seed : cfg.test_maps) {
    require_input(ws.map_file(map_seed), "gen-maps");
    const TerrainMap map = load_terrain(ws.map_file(map_seed).string());
    const auto pairs = sample_goal_pairs(map, cfg.pairs_per_map, cfg.pair_min_distance, cfg.pair_max_distance,
                                         cfg.pair_margin, cfg.pair_seed);
    const PmfField prior_field = prior_pmf_field(map, cfg.model.prior, cfg.model.features, discs, cfg.robot, cfg.n_yaw);
    for (std::uint64_t seed : cfg.seeds) {
      const PmfField learned = learned_pmf_field(map, load_model(cfg, ws, kNavLearned, seed), cfg.robot, cfg.n_yaw);
      const PmfField ood_field =
          learned_pmf_field(map, load_model(cfg, ws, "uniform_evidential", seed), cfg.robot, cfg.n_yaw);
      for (double alpha : cfg.alphas) {
        struct Entry
        {
          const std::string* name;
          const PmfField* field;
          double ood_weight;
        };
        const Entry entries[] = {{&kNavLearned, &learned, 0.0},
                                 {&kNavOodAvoid, &ood_field, cfg.ood_weight},
                                 {&kPhysicsPriorMethod, &prior_field, 0.0}};
        for (const Entry& e : entries) {
          NavConfig nc = cfg.nav;
          nc.ground_truth = cfg.truth;
          nc.planner.ood_weight = e.ood_weight;
          const CvarMapStack stack = cvar_stack(*e.field, alpha);
          for (EpisodeLog& log : run_navigation(map, stack, pairs, cfg.robot, nc, seed, *e.name)) {
            trials.push_back({*e.name, alpha, std::move(log)});
          }
        }
      }
      log_progress("navigation map " + std::to_string(map_seed) + " seed " + std::to_string(seed) + " done");
    }
  }

  const std::vector<std::string> order{kNavLearned, kNavOodAvoid, kPhysicsPriorMethod};
  std::stable_sort(trials.begin(), trials.end(), [&](const Trial& a, const Trial& b) {
    const auto ia = std::find(order.begin(), order.end(), a.method) - order.begin();
    const auto ib = std::find(order.begin(), order.end(), b.method) - order.begin();
    if (ia != ib) {
      return ia < ib;
    }
    return a.alpha < b.alpha;
  });
  CsvWriter episodes(ws.result_file("nav_episodes.csv"),
                     {"method", "alpha", "map_seed", "pair", "seed", "outcome", "steps", "time_s", "path_length"});
  for (const Trial& t : trials) {
    episodes.row({t.method, fixed(t.alpha, 2), std::to_string(t.log.map_seed), std::to_string(t.log.pair),
                  std::to_string(t.log.seed), to_string(t.log.outcome), std::to_string(t.log.steps),
                  fixed(t.log.steps * cfg.robot.dt, 2), fixed(t.log.path_length)});
  }
  CsvWriter summary(ws.result_file("nav_summary.csv"),
                    {"method", "alpha", "trials", "successes", "success_rate", "median_time_s"});
  for (const std::string& method : order) {
    std::vector<std::string> alpha_labels;
    for (double a : cfg.alphas) {
      alpha_labels.push_back(fixed(a, 2));
    }
    alpha_labels.push_back("all");
    for (const std::string& label : alpha_labels) {
      int count = 0;
      int ok = 0;
      std::vector<double> times;
      for (const Trial& t : trials) {
        if (t.method != method || (label != "all" && fixed(t.alpha, 2) != label)) {
          continue;
        }
        ++count;
        if (t.log.outcome == NavOutcome::success) {
          ++ok;
          times.push_back(t.log.steps * cfg.robot.dt);
        }
      }
      summary.row({method, label, std::to_string(count), std::to_string(ok),
                   fixed(count > 0 ? static_cast<double>(ok) / count : 0.0, 4), fixed(median_of(times), 2)});
    }
  }
  log_progress("navigation benchmark: " + std::to_string(trials.size()) + " trials");
}

// ---------------------------------------------------------------------------
// CSV reading and the report

std::size_t CsvTable::column(const std::string& name) const
{
  const auto it = std::find(header.begin(), header.end(), name);
  require(it != header.end(), "csv: no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

const std::string& CsvTable::at(std::size_t row, const std::string& name) const { return rows.at(row).at(column(name)); }

double CsvTable::number(std::size_t row, const std::string& name) const
{
  const std::string& s = at(row, name);
  if (s == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (s == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  require(used == s.size(), "csv: not a number '" + s + "'");
  return v;
}

CsvTable read_csv(const fs::path& path)
{
  require(fs::exists(path), "missing input " + path.string());
  std::ifstream in = open_for_reading(path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cells.push_back(cell);
    }
    return cells;
  };
  require(static_cast<bool>(std::getline(in, line)), "csv: empty file " + path.string());
  t.header = split(line);
  require(!t.header.empty() && t.header[0] == "schema", "csv: missing schema column in " + path.string());
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    auto cells = split(line);
    require(cells.size() == t.header.size(), "csv: ragged row in " + path.string());
    require(cells[0] == std::to_string(kSchemaVersion), "csv: unsupported schema version in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void stage_report(const Workspace& ws)
{
  const CsvTable learning = read_csv(ws.result_file("learning.csv"));
  const CsvTable bins = read_csv(ws.result_file("unevenness_bins.csv"));
  const CsvTable fallback = read_csv(ws.result_file("fallback.csv"));
  const CsvTable nav = read_csv(ws.result_file("nav_summary.csv"));

  std::ofstream out = open_for_writing(ws.result_file("report.md").string());
  out << "# Benchmark report\n\n";
  out << "## Prediction error (EMD^2 of the expected PMF, mean +- std over seeds)\n\n";
  out << "| method | overall | ID | OOD |\n|---|---|---|---|\n";
  for (std::size_t r = 0; r < learning.rows.size(); ++r) {
    out << "| " << learning.at(r, "method") << " | " << learning.at(r, "overall_mean") << " +- "
        << learning.at(r, "overall_std") << " | " << learning.at(r, "id_mean") << " +- " << learning.at(r, "id_std")
        << " | " << learning.at(r, "ood_mean") << " +- " << learning.at(r, "ood_std") << " |\n";
  }

  out << "\n## Error against unevenness (bins in multiples of the ID threshold)\n\n";
  std::vector<std::string> methods;
  std::vector<std::string> bin_labels;
  std::map<std::pair<std::string, std::string>, std::string> cell;
  std::map<std::string, std::string> counts;
  for (std::size_t r = 0; r < bins.rows.size(); ++r) {
    const std::string m = bins.at(r, "method");
    const std::string label = "[" + bins.at(r, "bin_lo") + ", " + bins.at(r, "bin_hi") + ")";
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) {
      methods.push_back(m);
    }
    if (std::find(bin_labels.begin(), bin_labels.end(), label) == bin_labels.end()) {
      bin_labels.push_back(label);
    }
    cell[{m, label}] = bins.at(r, "mean_emd2");
    counts[label] = bins.at(r, "records");
  }
  out << "| bin | records |";
  for (const std::string& m : methods) {
    out << ' ' << m << " |";
  }
  out << "\n|---|---|";
  for (std::size_t i = 0; i < methods.size(); ++i) {
    out << "---|";
  }
  out << '\n';
  for (const std::string& label : bin_labels) {
    out << "| " << label << " | " << counts[label] << " |";
    for (const std::string& m : methods) {
      out << ' ' << cell[{m, label}] << " |";
    }
    out << '\n';
  }

  out << "\n## Far-OOD fallback (mean L1 gap of the expected PMF)\n\n";
  out << "| method | probes | to physics prior | to uniform |\n|---|---|---|---|\n";
  std::vector<std::string> fb_methods;
  for (std::size_t r = 0; r < fallback.rows.size(); ++r) {
    if (std::find(fb_methods.begin(), fb_methods.end(), fallback.at(r, "method")) == fb_methods.end()) {
      fb_methods.push_back(fallback.at(r, "method"));
    }
  }
  for (const std::string& m : fb_methods) {
    std::vector<double> gp;
    std::vector<double> gu;
    std::string probes;
    for (std::size_t r = 0; r < fallback.rows.size(); ++r) {
      if (fallback.at(r, "method") == m) {
        gp.push_back(fallback.number(r, "gap_physics_prior"));
        gu.push_back(fallback.number(r, "gap_uniform"));
        probes = fallback.at(r, "probes");
      }
    }
    out << "| " << m << " | " << probes << " | " << fixed(mean_of(gp)) << " | " << fixed(mean_of(gu)) << " |\n";
  }

  out << "\n## Navigation\n\n| method | alpha | trials | success rate | median time to goal (s) |\n|---|---|---|---|---|\n";
  for (std::size_t r = 0; r < nav.rows.size(); ++r) {
    out << "| " << nav.at(r, "method") << " | " << nav.at(r, "alpha") << " | " << nav.at(r, "trials") << " | "
        << nav.at(r, "success_rate") << " | " << nav.at(r, "median_time_s") << " |\n";
  }
  log_progress("wrote " + ws.result_file("report.md").string());
}

void run_pipeline(const ExperimentConfig& cfg, const Workspace& ws, const StageTimer& on_stage)
{
  cfg.validate();
  fs::create_directories(ws.root);
  {
    std::ofstream out = open_for_writing((ws.root / "config.json").string());
    out << experiment_config_json(cfg);
  }
  const std::pair<const char*, std::function<void()>> stages[] = {
      {"gen-maps", [&] { stage_gen_maps(cfg, ws); }},
      {"collect", [&] { stage_collect(cfg, ws); }},
      {"train", [&] { stage_train(cfg, ws); }},
      {"eval-learning", [&] { stage_eval_learning(cfg, ws); }},
      {"bench-nav", [&] { stage_bench_nav(cfg, ws); }},
      {"report", [&] { stage_report(ws); }},
  };
  for (const auto& [name, run] : stages) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    if (on_stage) {
      on_stage(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }
}

}  // namespace evtrav
