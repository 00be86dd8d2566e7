#include "evtrav/flow.hpp"

#include <cmath>
#include <numbers>

namespace evtrav::nn
{

namespace
{

struct Split
{
  Eigen::Index cond_begin;
  Eigen::Index cond_size;
  Eigen::Index trans_begin;
  Eigen::Index trans_size;
};

}  // namespace

FlowDensity::FlowDensity(const Config& config) : config_(config)
{
  require(config.latent_dim >= 2, "FlowDensity: latent dimension must be at least 2");
  require(config.num_couplings >= 0 && config.hidden_width >= 1, "FlowDensity: bad coupling configuration");
  const int d = config.latent_dim;
  norm_log_scale_ = VectorXd::Zero(d);
  norm_shift_ = VectorXd::Zero(d);
  norm_log_scale_grad_ = VectorXd::Zero(d);
  norm_shift_grad_ = VectorXd::Zero(d);
  for (int l = 0; l < config.num_couplings; ++l) {
    const bool head = conditions_on_head(static_cast<std::size_t>(l));
    const int cond = head ? head_size() : d - head_size();
    const int trans = d - cond;
    MlpConfig mc;
    mc.layer_widths = {cond, config.hidden_width, 2 * trans};
    mc.activation = Activation::tanh;
    mc.seed = config.seed + 7919 * static_cast<std::uint64_t>(l + 1);
    Mlp conditioner(mc);
    conditioner.layers().back().weight.setZero();
    conditioner.layers().back().bias.setZero();
    conditioners_.push_back(std::move(conditioner));
  }
}

double FlowDensity::base_log_density(const VectorXd& u)
{
  return -0.5 * u.squaredNorm() - 0.5 * static_cast<double>(u.size()) * std::log(2 * std::numbers::pi);
}

Eigen::RowVectorXd FlowDensity::log_density(const MatrixXd& z, Tape* tape) const
{
  require(z.rows() == config_.latent_dim, "FlowDensity: latent width mismatch");
  require(z.allFinite(), "FlowDensity: non-finite latent input");
  const Eigen::Index d = config_.latent_dim;
  const double bound = config_.max_log_scale;
  if (tape != nullptr) {
    *tape = Tape{};
    tape->layer_inputs.push_back(z);
  }

  MatrixXd x = ((z.colwise() + norm_shift_).array().colwise() * norm_log_scale_.array().exp()).matrix();
  Eigen::RowVectorXd log_det = Eigen::RowVectorXd::Constant(z.cols(), norm_log_scale_.sum());

  for (std::size_t l = 0; l < conditioners_.size(); ++l) {
    const bool head = conditions_on_head(l);
    const Eigen::Index h = head_size();
    const Split s = head ? Split{0, h, h, d - h} : Split{h, d - h, 0, h};
    if (tape != nullptr) {
      tape->layer_inputs.push_back(x);
      tape->conditioner_tapes.emplace_back();
    }
    const MatrixXd raw =
        conditioners_[l].forward(x.middleRows(s.cond_begin, s.cond_size),
                                 tape != nullptr ? &tape->conditioner_tapes.back() : nullptr);
    const MatrixXd raw_scale = raw.topRows(s.trans_size);
    const MatrixXd log_scale = (bound * (raw_scale.array() / bound).tanh()).matrix();
    x.middleRows(s.trans_begin, s.trans_size) =
        (x.middleRows(s.trans_begin, s.trans_size).array() * log_scale.array().exp() +
         raw.bottomRows(s.trans_size).array())
            .matrix();
    log_det += log_scale.colwise().sum();
    if (tape != nullptr) {
      tape->log_scales.push_back(log_scale);
      tape->raw_log_scales.push_back(raw_scale);
    }
  }

  Eigen::RowVectorXd out = -0.5 * x.colwise().squaredNorm();
  out.array() += -0.5 * static_cast<double>(d) * std::log(2 * std::numbers::pi);
  out += log_det;
  if (tape != nullptr) {
    tape->output = std::move(x);
  }
  return out;
}

MatrixXd FlowDensity::backward(const Tape& tape, const Eigen::RowVectorXd& dlog_density)
{
  const Eigen::Index d = config_.latent_dim;
  const double bound = config_.max_log_scale;
  // d(-|u|^2/2)/du = -u
  MatrixXd dy = -(tape.output.array().rowwise() * dlog_density.array()).matrix();

  for (std::size_t l = conditioners_.size(); l-- > 0;) {
    const bool head = conditions_on_head(l);
    const Eigen::Index h = head_size();
    const Split s = head ? Split{0, h, h, d - h} : Split{h, d - h, 0, h};
    const MatrixXd& x = tape.layer_inputs[l + 1];
    const MatrixXd& log_scale = tape.log_scales[l];
    const Eigen::ArrayXXd scale = log_scale.array().exp();

    const MatrixXd dy_trans = dy.middleRows(s.trans_begin, s.trans_size);
    MatrixXd dlog_scale = (dy_trans.array() * x.middleRows(s.trans_begin, s.trans_size).array() * scale).matrix();
    dlog_scale.rowwise() += dlog_density;
    MatrixXd draw(2 * s.trans_size, x.cols());
    draw.topRows(s.trans_size) = (dlog_scale.array() * (1.0 - (log_scale.array() / bound).square())).matrix();
    draw.bottomRows(s.trans_size) = dy_trans;

    MatrixXd dx(d, x.cols());
    dx.middleRows(s.trans_begin, s.trans_size) = (dy_trans.array() * scale).matrix();
    dx.middleRows(s.cond_begin, s.cond_size) =
        dy.middleRows(s.cond_begin, s.cond_size) + conditioners_[l].backward(tape.conditioner_tapes[l], draw);
    dy = std::move(dx);
  }

  const MatrixXd& normalized = tape.layer_inputs.size() > 1 ? tape.layer_inputs[1] : tape.output;
  norm_log_scale_grad_ += (dy.array() * normalized.array()).rowwise().sum().matrix();
  norm_log_scale_grad_.array() += dlog_density.sum();
  const Eigen::ArrayXd scale = norm_log_scale_.array().exp();
  norm_shift_grad_ += (dy.array().colwise() * scale).rowwise().sum().matrix();
  return (dy.array().colwise() * scale).matrix();
}

MatrixXd FlowDensity::forward(const MatrixXd& z) const
{
  require(z.rows() == config_.latent_dim, "FlowDensity: latent width mismatch");
  const Eigen::Index d = config_.latent_dim;
  const double bound = config_.max_log_scale;
  MatrixXd x = ((z.colwise() + norm_shift_).array().colwise() * norm_log_scale_.array().exp()).matrix();
  for (std::size_t l = 0; l < conditioners_.size(); ++l) {
    const bool head = conditions_on_head(l);
    const Eigen::Index h = head_size();
    const Split s = head ? Split{0, h, h, d - h} : Split{h, d - h, 0, h};
    const MatrixXd raw = conditioners_[l].forward(x.middleRows(s.cond_begin, s.cond_size));
    const Eigen::ArrayXXd log_scale = bound * (raw.topRows(s.trans_size).array() / bound).tanh();
    x.middleRows(s.trans_begin, s.trans_size) =
        (x.middleRows(s.trans_begin, s.trans_size).array() * log_scale.exp() + raw.bottomRows(s.trans_size).array())
            .matrix();
  }
  return x;
}

MatrixXd FlowDensity::inverse(const MatrixXd& u) const
{
  require(u.rows() == config_.latent_dim, "FlowDensity: latent width mismatch");
  const Eigen::Index d = config_.latent_dim;
  const double bound = config_.max_log_scale;
  MatrixXd x = u;
  for (std::size_t l = conditioners_.size(); l-- > 0;) {
    const bool head = conditions_on_head(l);
    const Eigen::Index h = head_size();
    const Split s = head ? Split{0, h, h, d - h} : Split{h, d - h, 0, h};
    const MatrixXd raw = conditioners_[l].forward(x.middleRows(s.cond_begin, s.cond_size));
    const Eigen::ArrayXXd log_scale = bound * (raw.topRows(s.trans_size).array() / bound).tanh();
    x.middleRows(s.trans_begin, s.trans_size) =
        ((x.middleRows(s.trans_begin, s.trans_size).array() - raw.bottomRows(s.trans_size).array()) *
         (-log_scale).exp())
            .matrix();
  }
  return ((x.array().colwise() * (-norm_log_scale_.array()).exp()).matrix().colwise() - norm_shift_);
}

void FlowDensity::initialize_normalization(const MatrixXd& z)
{
  require(z.rows() == config_.latent_dim && z.cols() >= 2, "FlowDensity: need at least two latent samples");
  const VectorXd mean = z.rowwise().mean();
  const VectorXd var = (z.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(z.cols());
  norm_shift_ = -mean;
  norm_log_scale_ = -(var.array().sqrt() + 1e-6).log().matrix();
}

void FlowDensity::collect(ParameterSet& out, const std::string& prefix)
{
  out.push_back({prefix + ".norm.log_scale", norm_log_scale_.data(), norm_log_scale_grad_.data(),
                 norm_log_scale_.size(), 1});
  out.push_back({prefix + ".norm.shift", norm_shift_.data(), norm_shift_grad_.data(), norm_shift_.size(), 1});
  for (std::size_t l = 0; l < conditioners_.size(); ++l) {
    conditioners_[l].collect(out, prefix + ".coupling" + std::to_string(l));
  }
}

}  // namespace evtrav::nn
