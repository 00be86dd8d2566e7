#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evtrav/checkpoint.hpp"
#include "evtrav/flow.hpp"
#include "evtrav/simulator.hpp"

namespace evtrav
{

/// Which PMF anchors the Dirichlet posterior.
enum class PosteriorPrior
{
  physics,
  uniform,
};

/// Learned evidence (flow density times the downscaling head) or a fixed
/// pseudo-count that turns the model into a plain softmax predictor.
enum class EvidenceSource
{
  flow,
  fixed,
};

PosteriorPrior parse_posterior_prior(const std::string& name);
EvidenceSource parse_evidence_source(const std::string& name);
std::string to_string(PosteriorPrior p);
std::string to_string(EvidenceSource e);

struct EvidentialConfig
{
  int latent_dim = 8;
  /// Scale from flow density to evidence; zero selects exp(latent_dim).
  double certainty_budget = 0;
  double prior_evidence = 12.0;
  double kappa = 0.5;
  double entropy_weight = 1e-4;
  /// +1 adds an entropy bonus (loss - eta * H), -1 penalizes entropy.
  double entropy_sign = 1.0;
  double learning_rate = 1e-4;
  int epochs = 100;
  int batch_size = 64;
  int num_bins = 12;
  std::vector<int> encoder_widths{64, 32};
  /// Squash the encoder output with tanh; off leaves the last layer linear.
  bool encoder_output_tanh = true;
  int decoder_hidden = 32;
  int head_hidden = 16;
  int flow_couplings = 4;
  int flow_hidden = 16;
  PosteriorPrior posterior_prior = PosteriorPrior::physics;
  EvidenceSource evidence = EvidenceSource::flow;
  double fixed_evidence = 1e8;
  /// Lets the flow's gradient reach the encoder. Off by default: the flow can
  /// otherwise inflate its density by shrinking the latent cloud.
  bool flow_grad_to_encoder = false;
  /// Optimizer steps before joint training in which the decoders learn under
  /// the fixed evidence and the flow fits the latent density by maximum
  /// likelihood. Rounded up to whole epochs.
  int warmup_steps = 300;
  double grad_clip = 10.0;
  /// Training-evidence percentile below which an input is flagged OOD.
  double ood_percentile = 5.0;
  std::uint64_t seed = 0;
  PriorConfig prior;
  FeatureConfig features;

  double budget() const { return certainty_budget > 0 ? certainty_budget : std::exp(static_cast<double>(latent_dim)); }
  ParamDiscretizations discretizations() const
  {
    return {Discretization::traction(num_bins), Discretization::angle(num_bins)};
  }
  void validate() const;
};

/// Output for one traversability parameter.
struct ParamPrediction
{
  VectorXd beta;
  Pmf<> expected = Pmf<>::uniform(Discretization::traction());
  double evidence = 0;
  Pmf<> prior = expected;
  Pmf<> learned = expected;
};

using Prediction = std::array<ParamPrediction, kNumTravParams>;

/// Posterior update: beta = n_phys * prior + n * learned, and its mean written
/// as the convex blend (1 - w) * prior + w * learned with w = n / (n_phys + n),
/// so n = 0 returns the prior unchanged.
struct Posterior
{
  VectorXd beta;
  Pmf<> expected;
};
Posterior posterior_update(const Pmf<>& prior, const Pmf<>& learned, double evidence, double prior_evidence);

/// Flattened network input: elevation, vegetation-indicator and
/// vegetation-height patches in that order, each row-major.
VectorXd encode_feature(const TerrainFeature& f);

/// Physics priors and one-hot targets for a record set, computed once.
struct PreparedData
{
  MatrixXd inputs;                                 // D x n
  std::array<MatrixXd, kNumTravParams> physics;    // B x n
  std::array<MatrixXd, kNumTravParams> targets;    // B x n
  std::vector<double> unevenness;
  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};
PreparedData prepare_data(const std::vector<DatasetRecord>& records, const EvidentialConfig& cfg);

/// Batched forward results and the intermediates backward needs.
struct ForwardPass
{
  MatrixXd standardized;
  nn::Mlp::Tape encoder_tape;
  MatrixXd latent;
  std::array<nn::Mlp::Tape, kNumTravParams> decoder_tapes;
  std::array<MatrixXd, kNumTravParams> learned;    // softmax outputs, B x n
  nn::Mlp::Tape head_tape;
  MatrixXd head;                                   // sigmoid outputs, 4 x n
  MatrixXd projected;
  nn::FlowDensity::Tape flow_tape;
  Eigen::RowVectorXd log_density;
  MatrixXd evidence;                               // 4 x n
  /// Shared evidence N * p(z) before the per-parameter head.
  Eigen::RowVectorXd shared_evidence;
};

enum class TrainingPhase
{
  warmup,
  joint,
};

struct LossTerms
{
  double loss = 0;
  double upi = 0;
  double entropy = 0;
  /// Mean negative log density of the projected latents (warmup only).
  double flow_nll = 0;
};

/// Per-epoch training history.
struct TrainingCurves
{
  std::vector<double> train_loss;
  std::vector<double> train_emd2;
  std::vector<double> val_emd2;
  /// Best epoch among the joint-phase epochs, counted from zero overall.
  int best_epoch = -1;
};

class EvidentialModel
{
public:
  EvidentialModel() = default;
  EvidentialModel(const EvidentialConfig& cfg, int input_dim);

  const EvidentialConfig& config() const { return cfg_; }
  int input_dim() const { return input_dim_; }

  /// Block standardization of the three input patches from training data.
  void fit_standardizer(const MatrixXd& inputs);
  /// Data-dependent initialization of the flow's normalization layer.
  void initialize_flow(const MatrixXd& inputs);

  ForwardPass forward(const MatrixXd& inputs, bool keep_tapes = false) const;
  /// Mean loss over the batch; with `grads` set, accumulates parameter gradients.
  /// The warmup phase swaps the learned evidence for the fixed one and trains
  /// the flow on its own likelihood.
  LossTerms loss(const PreparedData& data, const std::vector<std::size_t>& batch, bool grads,
                 TrainingPhase phase = TrainingPhase::joint);

  /// Expected PMFs for every column, param-major: out[k] is B x n.
  std::array<MatrixXd, kNumTravParams> expected_pmfs(const MatrixXd& inputs,
                                                     const std::array<MatrixXd, kNumTravParams>& priors) const;
  Prediction predict(const TerrainFeature& f) const;
  /// Shared learned evidence N * p(z).
  double ood_score(const TerrainFeature& f) const;
  bool is_ood(const TerrainFeature& f) const { return ood_score(f) < ood_threshold_; }
  double ood_threshold() const { return ood_threshold_; }
  void calibrate_ood(const MatrixXd& train_inputs);

  nn::ParameterSet parameters();
  void zero_grads();

  Checkpoint to_checkpoint() const;
  static EvidentialModel from_checkpoint(const Checkpoint& cp, const EvidentialConfig& cfg);

  /// Physics or uniform prior used in the posterior, B x n.
  MatrixXd posterior_prior(const MatrixXd& physics) const;

private:
  EvidentialConfig cfg_;
  int input_dim_ = 0;
  VectorXd input_mean_;
  VectorXd input_scale_;
  nn::Mlp encoder_;
  std::array<nn::Mlp, kNumTravParams> decoders_;
  nn::Mlp head_;
  MatrixXd projection_;
  nn::FlowDensity flow_;
  double ood_threshold_ = 0;
};

/// Mean over records of the per-parameter average EMD^2 between expected PMF
/// and one-hot target.
double mean_emd2(const std::array<MatrixXd, kNumTravParams>& expected,
                 const std::array<MatrixXd, kNumTravParams>& targets);
/// Same, one value per record.
VectorXd record_emd2(const std::array<MatrixXd, kNumTravParams>& expected,
                     const std::array<MatrixXd, kNumTravParams>& targets);

/// Whole warmup epochs for a training set of the given size; zero for fixed evidence.
int warmup_epochs(const EvidentialConfig& cfg, std::size_t train_size);

/// Adam on minibatches with gradient clipping; the parameters with the best
/// validation error are restored at the end. Deterministic per cfg.seed.
TrainingCurves train(EvidentialModel& model, const PreparedData& train_data, const PreparedData& val_data);

}  // namespace evtrav
