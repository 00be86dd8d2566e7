#include "evtrav/predictor.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "evtrav/losses.hpp"

namespace evtrav
{

namespace
{

// Evidence is capped at exp(kMaxLogEvidence); beyond it the posterior is
// already indistinguishable from the learned PMF.
constexpr double kMaxLogEvidence = 40.0;

}  // namespace

PosteriorPrior parse_posterior_prior(const std::string& name)
{
  if (name == "physics") {
    return PosteriorPrior::physics;
  }
  if (name == "uniform") {
    return PosteriorPrior::uniform;
  }
  throw DomainError("unknown posterior prior '" + name + "' (expected physics or uniform)");
}

EvidenceSource parse_evidence_source(const std::string& name)
{
  if (name == "flow") {
    return EvidenceSource::flow;
  }
  if (name == "fixed") {
    return EvidenceSource::fixed;
  }
  throw DomainError("unknown evidence source '" + name + "' (expected flow or fixed)");
}

std::string to_string(PosteriorPrior p) { return p == PosteriorPrior::physics ? "physics" : "uniform"; }
std::string to_string(EvidenceSource e) { return e == EvidenceSource::flow ? "flow" : "fixed"; }

void EvidentialConfig::validate() const
{
  require(latent_dim >= 2, "EvidentialConfig: latent dimension must be at least 2");
  require(certainty_budget >= 0, "EvidentialConfig: certainty budget must be non-negative");
  require(prior_evidence > 0, "EvidentialConfig: prior evidence must be positive");
  require(kappa >= 0 && entropy_weight >= 0, "EvidentialConfig: kappa and entropy weight must be non-negative");
  require(learning_rate > 0 && epochs >= 0 && warmup_steps >= 0 && batch_size >= 1, "EvidentialConfig: bad optimizer settings");
  require(num_bins >= 2, "EvidentialConfig: need at least two bins");
  require(encoder_widths.size() >= 2 && decoder_hidden >= 1 && head_hidden >= 1,
          "EvidentialConfig: encoder needs a hidden and an output width; widths must be positive");
  require(fixed_evidence > 0 && grad_clip > 0, "EvidentialConfig: fixed evidence and clip must be positive");
  require(ood_percentile >= 0 && ood_percentile <= 100, "EvidentialConfig: OOD percentile must lie in [0, 100]");
  prior.validate();
  features.validate();
}

Posterior posterior_update(const Pmf<>& prior, const Pmf<>& learned, double evidence, double prior_evidence)
{
  require(prior.disc() == learned.disc(), "posterior_update: discretizations differ");
  require(evidence >= 0 && prior_evidence > 0, "posterior_update: evidence must be non-negative");
  const double w = evidence / (prior_evidence + evidence);
  if (w == 0) {
    return {prior_evidence * prior.masses(), prior};
  }
  VectorXd expected = (1 - w) * prior.masses() + w * learned.masses();
  return {prior_evidence * prior.masses() + evidence * learned.masses(), Pmf<>(std::move(expected), prior.disc())};
}

VectorXd encode_feature(const TerrainFeature& f)
{
  const Eigen::Index n = f.elevation_patch.size();
  VectorXd x(3 * n);
  Eigen::Index k = 0;
  for (const MatrixXd* patch : {&f.elevation_patch, &f.semantic_patch, &f.veg_patch}) {
    require(patch->size() == n, "encode_feature: patch sizes differ");
    for (Eigen::Index i = 0; i < patch->rows(); ++i) {
      for (Eigen::Index j = 0; j < patch->cols(); ++j) {
        x[k++] = (*patch)(i, j);
      }
    }
  }
  return x;
}

PreparedData prepare_data(const std::vector<DatasetRecord>& records, const EvidentialConfig& cfg)
{
  const auto discs = cfg.discretizations();
  PreparedData d;
  const auto n = static_cast<Eigen::Index>(records.size());
  const Eigen::Index dim = records.empty() ? 3 * cfg.features.patch_size * cfg.features.patch_size
                                           : encode_feature(records.front().feature).size();
  d.inputs.resize(dim, n);
  for (TravParam p : kAllTravParams) {
    d.physics[index_of(p)].resize(cfg.num_bins, n);
    d.targets[index_of(p)].resize(cfg.num_bins, n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    d.inputs.col(i) = encode_feature(r.feature);
    for (TravParam p : kAllTravParams) {
      const auto& disc = discs.of(p);
      d.physics[index_of(p)].col(i) = physics_prior_pmf(r.feature.footprint, p, cfg.prior, disc).masses();
      d.targets[index_of(p)].col(i) = one_hot_encode(r.target[index_of(p)], disc).masses();
    }
    d.unevenness.push_back(r.unevenness);
  }
  return d;
}

EvidentialModel::EvidentialModel(const EvidentialConfig& cfg, int input_dim) : cfg_(cfg), input_dim_(input_dim)
{
  cfg.validate();
  require(input_dim >= 1, "EvidentialModel: input dimension must be positive");
  nn::MlpConfig enc;
  enc.layer_widths = {input_dim};
  enc.layer_widths.insert(enc.layer_widths.end(), cfg.encoder_widths.begin(), cfg.encoder_widths.end());
  require(enc.layer_widths.size() >= 3, "EvidentialModel: encoder needs a hidden layer");
  enc.activation = nn::Activation::tanh;
  enc.output_activation = cfg.encoder_output_tanh ? nn::Activation::tanh : nn::Activation::identity;
  enc.seed = derive_seed(cfg.seed, {1});
  encoder_ = nn::Mlp(enc);
  const int latent = enc.layer_widths.back();
  for (int k = 0; k < kNumTravParams; ++k) {
    nn::MlpConfig dec;
    dec.layer_widths = {latent, cfg.decoder_hidden, cfg.num_bins};
    dec.seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(k)});
    decoders_[static_cast<std::size_t>(k)] = nn::Mlp(dec);
  }
  nn::MlpConfig head;
  head.layer_widths = {latent, cfg.head_hidden, kNumTravParams};
  head.seed = derive_seed(cfg.seed, {3});
  head_ = nn::Mlp(head);

  std::mt19937_64 rng(derive_seed(cfg.seed, {4}));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(latent)));
  projection_.resize(cfg.latent_dim, latent);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) {
    projection_.data()[i] = normal(rng);
  }
  nn::FlowDensity::Config fc;
  fc.latent_dim = cfg.latent_dim;
  fc.num_couplings = cfg.flow_couplings;
  fc.hidden_width = cfg.flow_hidden;
  fc.seed = derive_seed(cfg.seed, {5});
  flow_ = nn::FlowDensity(fc);

  input_mean_ = VectorXd::Zero(input_dim);
  input_scale_ = VectorXd::Ones(input_dim);
}

void EvidentialModel::fit_standardizer(const MatrixXd& inputs)
{
  require(inputs.rows() == input_dim_ && inputs.cols() > 0, "fit_standardizer: input shape mismatch");
  // Three equal blocks share one mean and scale each.
  const Eigen::Index block = input_dim_ % 3 == 0 ? input_dim_ / 3 : input_dim_;
  for (Eigen::Index b = 0; b < input_dim_; b += block) {
    const auto values = inputs.middleRows(b, block);
    const double mean = values.mean();
    const double sd = std::sqrt((values.array() - mean).square().mean());
    input_mean_.segment(b, block).setConstant(mean);
    input_scale_.segment(b, block).setConstant(sd > 1e-8 ? 1 / sd : 1.0);
  }
}

void EvidentialModel::initialize_flow(const MatrixXd& inputs)
{
  const ForwardPass fp = forward(inputs);
  flow_.initialize_normalization(projection_ * fp.latent);
}

MatrixXd EvidentialModel::posterior_prior(const MatrixXd& physics) const
{
  if (cfg_.posterior_prior == PosteriorPrior::physics) {
    return physics;
  }
  return MatrixXd::Constant(physics.rows(), physics.cols(), 1.0 / static_cast<double>(physics.rows()));
}

ForwardPass EvidentialModel::forward(const MatrixXd& inputs, bool keep_tapes) const
{
  require(inputs.rows() == input_dim_, "EvidentialModel: input width mismatch");
  require(inputs.allFinite(), "EvidentialModel: non-finite input");
  ForwardPass fp;
  fp.standardized = ((inputs.colwise() - input_mean_).array().colwise() * input_scale_.array()).matrix();
  fp.latent = encoder_.forward(fp.standardized, keep_tapes ? &fp.encoder_tape : nullptr);
  for (std::size_t k = 0; k < decoders_.size(); ++k) {
    fp.learned[k] = nn::softmax(decoders_[k].forward(fp.latent, keep_tapes ? &fp.decoder_tapes[k] : nullptr));
  }
  const Eigen::Index n = inputs.cols();
  if (cfg_.evidence == EvidenceSource::fixed) {
    fp.shared_evidence = Eigen::RowVectorXd::Constant(n, cfg_.fixed_evidence);
    fp.evidence = MatrixXd::Constant(kNumTravParams, n, cfg_.fixed_evidence);
    return fp;
  }
  fp.head = nn::sigmoid(head_.forward(fp.latent, keep_tapes ? &fp.head_tape : nullptr));
  fp.projected = projection_ * fp.latent;
  fp.log_density = flow_.log_density(fp.projected, keep_tapes ? &fp.flow_tape : nullptr);
  const double log_budget = std::log(cfg_.budget());
  fp.shared_evidence = (log_budget + fp.log_density.array()).min(kMaxLogEvidence).exp().matrix();
  fp.evidence = (fp.head.array().rowwise() * fp.shared_evidence.array()).matrix();
  if (!fp.latent.allFinite() || !fp.evidence.allFinite()) {
    throw DomainError("EvidentialModel: non-finite activations in forward pass");
  }
  return fp;
}

LossTerms EvidentialModel::loss(const PreparedData& data, const std::vector<std::size_t>& batch, bool grads,
                                TrainingPhase phase)
{
  require(!batch.empty(), "EvidentialModel::loss: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  MatrixXd inputs(input_dim_, n);
  std::array<MatrixXd, kNumTravParams> physics;
  std::array<MatrixXd, kNumTravParams> targets;
  for (std::size_t k = 0; k < kNumTravParams; ++k) {
    physics[k].resize(cfg_.num_bins, n);
    targets[k].resize(cfg_.num_bins, n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(i)]);
    inputs.col(i) = data.inputs.col(src);
    for (std::size_t k = 0; k < kNumTravParams; ++k) {
      physics[k].col(i) = data.physics[k].col(src);
      targets[k].col(i) = data.targets[k].col(src);
    }
  }

  const ForwardPass fp = forward(inputs, grads);
  const bool warmup = phase == TrainingPhase::warmup && cfg_.evidence == EvidenceSource::flow;
  const double norm = 1.0 / static_cast<double>(n * kNumTravParams);
  const double eta = cfg_.entropy_weight * cfg_.entropy_sign;
  LossTerms terms;
  std::array<MatrixXd, kNumTravParams> dlearned;
  MatrixXd devidence = MatrixXd::Zero(kNumTravParams, n);
  for (std::size_t k = 0; k < kNumTravParams; ++k) {
    const MatrixXd prior = posterior_prior(physics[k]);
    dlearned[k].resize(cfg_.num_bins, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ev = warmup ? cfg_.fixed_evidence : fp.evidence(static_cast<Eigen::Index>(k), i);
      const VectorXd beta = cfg_.prior_evidence * prior.col(i) + ev * fp.learned[k].col(i);
      const double upi = upi_loss(beta, targets[k].col(i), physics[k].col(i), cfg_.kappa);
      const double h = eta != 0 ? dirichlet_entropy(beta) : 0.0;
      terms.upi += upi * norm;
      terms.entropy += h * norm;
      terms.loss += (upi - eta * h) * norm;
      if (grads) {
        VectorXd dbeta = upi_loss_grad(beta, targets[k].col(i), physics[k].col(i), cfg_.kappa);
        if (eta != 0) {
          dbeta -= eta * dirichlet_entropy_grad(beta);
        }
        dbeta *= norm;
        dlearned[k].col(i) = ev * dbeta;
        devidence(static_cast<Eigen::Index>(k), i) = fp.learned[k].col(i).dot(dbeta);
      }
    }
  }
  if (warmup) {
    terms.flow_nll = -fp.log_density.mean();
    terms.loss += terms.flow_nll;
  }
  if (!std::isfinite(terms.loss) || !std::isfinite(terms.flow_nll)) {
    std::ostringstream msg;
    msg << "training diverged: loss " << terms.loss << " (upi " << terms.upi << ", entropy " << terms.entropy
        << ", max evidence " << fp.evidence.maxCoeff() << ")";
    throw DomainError(msg.str());
  }
  if (!grads) {
    return terms;
  }

  MatrixXd dlatent = MatrixXd::Zero(fp.latent.rows(), n);
  for (std::size_t k = 0; k < kNumTravParams; ++k) {
    dlatent += decoders_[k].backward(fp.decoder_tapes[k], nn::softmax_backward(fp.learned[k], dlearned[k]));
  }
  if (warmup) {
    const MatrixXd dprojected = flow_.backward(fp.flow_tape, Eigen::RowVectorXd::Constant(n, -1.0 / static_cast<double>(n)));
    if (cfg_.flow_grad_to_encoder) {
      dlatent += projection_.transpose() * dprojected;
    }
  } else if (cfg_.evidence == EvidenceSource::flow) {
    // evidence = N * exp(log p) * sigmoid(a): d/da = evidence * (1 - g), d/dlog p = evidence.
    const MatrixXd dhead = (devidence.array() * fp.evidence.array() * (1.0 - fp.head.array())).matrix();
    dlatent += head_.backward(fp.head_tape, dhead);
    Eigen::RowVectorXd dlogp = (devidence.array() * fp.evidence.array()).colwise().sum();
    const double log_budget = std::log(cfg_.budget());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (log_budget + fp.log_density[i] > kMaxLogEvidence) {
        dlogp[i] = 0;
      }
    }
    const MatrixXd dprojected = flow_.backward(fp.flow_tape, dlogp);
    if (cfg_.flow_grad_to_encoder) {
      dlatent += projection_.transpose() * dprojected;
    }
  }
  encoder_.backward(fp.encoder_tape, dlatent);
  return terms;
}

std::array<MatrixXd, kNumTravParams> EvidentialModel::expected_pmfs(
    const MatrixXd& inputs, const std::array<MatrixXd, kNumTravParams>& priors) const
{
  const ForwardPass fp = forward(inputs);
  std::array<MatrixXd, kNumTravParams> out;
  for (std::size_t k = 0; k < kNumTravParams; ++k) {
    const MatrixXd prior = posterior_prior(priors[k]);
    const Eigen::RowVectorXd ev = fp.evidence.row(static_cast<Eigen::Index>(k));
    const Eigen::RowVectorXd w = (ev.array() / (cfg_.prior_evidence + ev.array())).matrix();
    out[k] = (prior.array().rowwise() * (1.0 - w.array()) + fp.learned[k].array().rowwise() * w.array()).matrix();
  }
  return out;
}

Prediction EvidentialModel::predict(const TerrainFeature& f) const
{
  const auto discs = cfg_.discretizations();
  const MatrixXd x = encode_feature(f);
  const ForwardPass fp = forward(x);
  Prediction out;
  for (TravParam p : kAllTravParams) {
    const auto k = static_cast<std::size_t>(index_of(p));
    const auto& disc = discs.of(p);
    const Pmf<> physics = physics_prior_pmf(f.footprint, p, cfg_.prior, disc);
    const Pmf<> prior = cfg_.posterior_prior == PosteriorPrior::physics ? physics : Pmf<>::uniform(disc);
    const Pmf<> learned(fp.learned[k].col(0), disc);
    const double ev = fp.evidence(index_of(p), 0);
    Posterior post = posterior_update(prior, learned, ev, cfg_.prior_evidence);
    out[k] = ParamPrediction{std::move(post.beta), std::move(post.expected), ev, prior, learned};
  }
  return out;
}

double EvidentialModel::ood_score(const TerrainFeature& f) const
{
  return forward(encode_feature(f)).shared_evidence[0];
}

void EvidentialModel::calibrate_ood(const MatrixXd& train_inputs)
{
  const ForwardPass fp = forward(train_inputs);
  std::vector<double> ev(fp.shared_evidence.data(), fp.shared_evidence.data() + fp.shared_evidence.size());
  require(!ev.empty(), "calibrate_ood: no training inputs");
  // Order statistic rather than an interpolated percentile, so at most that
  // fraction of the training set falls strictly below the threshold.
  const auto rank = std::min(ev.size() - 1, static_cast<std::size_t>(std::floor(cfg_.ood_percentile / 100.0 * static_cast<double>(ev.size()))));
  std::nth_element(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(rank), ev.end());
  ood_threshold_ = ev[rank];
}

nn::ParameterSet EvidentialModel::parameters()
{
  nn::ParameterSet out;
  encoder_.collect(out, "encoder");
  for (std::size_t k = 0; k < decoders_.size(); ++k) {
    decoders_[k].collect(out, "decoder" + std::to_string(k));
  }
  head_.collect(out, "head");
  flow_.collect(out, "flow");
  return out;
}

void EvidentialModel::zero_grads() { nn::zero_grads(parameters()); }

Checkpoint EvidentialModel::to_checkpoint() const
{
  Checkpoint cp;
  cp.put_scalar("meta.input_dim", input_dim_);
  cp.put_scalar("meta.latent_dim", cfg_.latent_dim);
  cp.put_scalar("meta.num_bins", cfg_.num_bins);
  cp.put("input.mean", input_mean_);
  cp.put("input.scale", input_scale_);
  cp.put("projection", projection_);
  cp.put_scalar("ood.threshold", ood_threshold_);
  // parameters() only hands out views; the model itself is not modified.
  cp.put_parameters(const_cast<EvidentialModel*>(this)->parameters());
  return cp;
}

EvidentialModel EvidentialModel::from_checkpoint(const Checkpoint& cp, const EvidentialConfig& cfg)
{
  require(cp.get_scalar("meta.latent_dim") == cfg.latent_dim, "checkpoint latent dimension differs from config");
  require(cp.get_scalar("meta.num_bins") == cfg.num_bins, "checkpoint bin count differs from config");
  EvidentialModel m(cfg, static_cast<int>(cp.get_scalar("meta.input_dim")));
  m.input_mean_ = cp.get("input.mean");
  m.input_scale_ = cp.get("input.scale");
  m.projection_ = cp.get("projection");
  m.ood_threshold_ = cp.get_scalar("ood.threshold");
  cp.load_parameters(m.parameters());
  return m;
}

VectorXd record_emd2(const std::array<MatrixXd, kNumTravParams>& expected,
                     const std::array<MatrixXd, kNumTravParams>& targets)
{
  const Eigen::Index n = expected[0].cols();
  VectorXd out = VectorXd::Zero(n);
  for (std::size_t k = 0; k < kNumTravParams; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i] += emd2(expected[k].col(i), targets[k].col(i)) / kNumTravParams;
    }
  }
  return out;
}

double mean_emd2(const std::array<MatrixXd, kNumTravParams>& expected,
                 const std::array<MatrixXd, kNumTravParams>& targets)
{
  const VectorXd r = record_emd2(expected, targets);
  return r.size() == 0 ? 0.0 : r.mean();
}

int warmup_epochs(const EvidentialConfig& cfg, std::size_t train_size)
{
  if (cfg.evidence != EvidenceSource::flow || cfg.warmup_steps <= 0 || train_size == 0) {
    return 0;
  }
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const auto batches = static_cast<int>((train_size + bs - 1) / bs);
  return (cfg.warmup_steps + batches - 1) / batches;
}

TrainingCurves train(EvidentialModel& model, const PreparedData& train_data, const PreparedData& val_data)
{
  const EvidentialConfig& cfg = model.config();
  require(train_data.size() > 0, "train: empty training set");
  model.fit_standardizer(train_data.inputs);
  if (cfg.evidence == EvidenceSource::flow) {
    model.initialize_flow(train_data.inputs);
  }
  nn::ParameterSet params = model.parameters();
  nn::AdamConfig ac;
  ac.learning_rate = cfg.learning_rate;
  nn::Adam adam(params, ac);
  std::mt19937_64 rng(derive_seed(cfg.seed, {6}));

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const PreparedData& select = val_data.size() > 0 ? val_data : train_data;
  TrainingCurves curves;
  double best = std::numeric_limits<double>::infinity();
  std::vector<VectorXd> best_values;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const int warmup = warmup_epochs(cfg, train_data.size());
  for (int epoch = 0; epoch < warmup + cfg.epochs; ++epoch) {
    const TrainingPhase phase = epoch < warmup ? TrainingPhase::warmup : TrainingPhase::joint;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      nn::zero_grads(params);
      const LossTerms t = model.loss(train_data, batch, true, phase);
      epoch_loss += t.loss * static_cast<double>(batch.size());
      nn::clip_grad_norm(params, cfg.grad_clip);
      adam.step();
    }
    curves.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    curves.train_emd2.push_back(mean_emd2(model.expected_pmfs(train_data.inputs, train_data.physics), train_data.targets));
    const double sel = &select == &train_data ? curves.train_emd2.back()
                                              : mean_emd2(model.expected_pmfs(select.inputs, select.physics), select.targets);
    curves.val_emd2.push_back(val_data.size() > 0 ? sel : std::numeric_limits<double>::quiet_NaN());
    if (phase == TrainingPhase::joint && sel < best) {
      best = sel;
      curves.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : params) {
        best_values.emplace_back(p.values());
      }
    }
  }
  if (!best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i].values() = best_values[i];
    }
  }
  model.calibrate_ood(train_data.inputs);
  return curves;
}

}  // namespace evtrav
