#include "evtrav/nn.hpp"

#include <cmath>

namespace evtrav::nn
{

Activation parse_activation(const std::string& name)
{
  if (name == "tanh") {
    return Activation::tanh;
  }
  if (name == "relu") {
    return Activation::relu;
  }
  if (name == "identity") {
    return Activation::identity;
  }
  throw DomainError("unknown activation '" + name + "'");
}

namespace
{

MatrixXd activate(Activation a, const MatrixXd& x)
{
  switch (a) {
    case Activation::tanh:
      return x.array().tanh().matrix();
    case Activation::relu:
      return x.cwiseMax(0.0);
    case Activation::identity:
      break;
  }
  return x;
}

// dL/dpre given the activation output and dL/dout.
MatrixXd activate_backward(Activation a, const MatrixXd& out, const MatrixXd& dout)
{
  switch (a) {
    case Activation::tanh:
      return (dout.array() * (1.0 - out.array().square())).matrix();
    case Activation::relu:
      return (dout.array() * (out.array() > 0.0).cast<double>()).matrix();
    case Activation::identity:
      break;
  }
  return dout;
}

}  // namespace

void zero_grads(const ParameterSet& params)
{
  for (const auto& p : params) {
    p.grads().setZero();
  }
}

double grad_norm(const ParameterSet& params)
{
  double sq = 0;
  for (const auto& p : params) {
    sq += p.grads().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const ParameterSet& params, double max_norm)
{
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      p.grads() *= scale;
    }
  }
  return norm;
}

Dense::Dense(int in, int out, std::mt19937_64& rng)
{
  require(in > 0 && out > 0, "Dense: widths must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  weight.resize(out, in);
  bias.resize(out);
  for (Eigen::Index c = 0; c < weight.cols(); ++c) {
    for (Eigen::Index r = 0; r < weight.rows(); ++r) {
      weight(r, c) = u(rng);
    }
  }
  for (Eigen::Index r = 0; r < bias.size(); ++r) {
    bias[r] = u(rng);
  }
  weight_grad = MatrixXd::Zero(out, in);
  bias_grad = VectorXd::Zero(out);
}

Dense Dense::identity(int width)
{
  Dense d;
  d.weight = MatrixXd::Identity(width, width);
  d.bias = VectorXd::Zero(width);
  d.weight_grad = MatrixXd::Zero(width, width);
  d.bias_grad = VectorXd::Zero(width);
  return d;
}

MatrixXd Dense::forward(const MatrixXd& x) const
{
  require(x.rows() == weight.cols(), "Dense: input width mismatch");
  return (weight * x).colwise() + bias;
}

MatrixXd Dense::backward(const MatrixXd& x, const MatrixXd& dy)
{
  weight_grad.noalias() += dy * x.transpose();
  bias_grad += dy.rowwise().sum();
  return weight.transpose() * dy;
}

void Dense::collect(ParameterSet& out, const std::string& prefix)
{
  out.push_back({prefix + ".weight", weight.data(), weight_grad.data(), weight.rows(), weight.cols()});
  out.push_back({prefix + ".bias", bias.data(), bias_grad.data(), bias.rows(), 1});
}

Mlp::Mlp(const MlpConfig& config) : hidden_(config.activation), output_(config.output_activation)
{
  const auto& w = config.layer_widths;
  require(w.size() >= 3, "Mlp: need input, at least one hidden layer, and output widths");
  for (int width : w) {
    require(width >= 1, "Mlp: widths must be positive");
  }
  std::mt19937_64 rng(config.seed);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    layers_.emplace_back(w[i], w[i + 1], rng);
  }
}

MatrixXd Mlp::forward(const MatrixXd& x, Tape* tape) const
{
  require(x.rows() == input_width(), "Mlp: input width mismatch");
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->outputs.clear();
  }
  MatrixXd h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool last = i + 1 == layers_.size();
    MatrixXd next = activate(last ? output_ : hidden_, layers_[i].forward(h));
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(h));
      tape->outputs.push_back(next);
    }
    h = std::move(next);
  }
  return h;
}

MatrixXd Mlp::backward(const Tape& tape, const MatrixXd& dy)
{
  MatrixXd grad = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool last = i + 1 == layers_.size();
    grad = activate_backward(last ? output_ : hidden_, tape.outputs[i], grad);
    grad = layers_[i].backward(tape.inputs[i], grad);
  }
  return grad;
}

void Mlp::collect(ParameterSet& out, const std::string& prefix)
{
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(out, prefix + "." + std::to_string(i));
  }
}

MatrixXd softmax(const MatrixXd& logits)
{
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double top = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - top).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

MatrixXd softmax_backward(const MatrixXd& probs, const MatrixXd& dprobs)
{
  const Eigen::RowVectorXd inner = (probs.array() * dprobs.array()).colwise().sum();
  return (probs.array() * (dprobs.rowwise() - inner).array()).matrix();
}

MatrixXd sigmoid(const MatrixXd& x)
{
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

void adam_step(Eigen::Ref<VectorXd> params, const Eigen::Ref<const VectorXd>& grads, AdamState& state,
               const AdamConfig& config)
{
  require(params.size() == grads.size(), "adam_step: shape mismatch");
  if (state.first_moment.size() != params.size()) {
    state.first_moment = VectorXd::Zero(params.size());
    state.second_moment = VectorXd::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.first_moment = config.beta1 * state.first_moment + (1 - config.beta1) * grads;
  state.second_moment = config.beta2 * state.second_moment + (1 - config.beta2) * grads.cwiseAbs2();
  const double c1 = 1 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + config.eps);
}

Adam::Adam(const ParameterSet& params, AdamConfig config)
    : params_(params), states_(params.size()), config_(config)
{
}

void Adam::step()
{
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(params_[i].values(), params_[i].grads(), states_[i], config_);
  }
}

}  // namespace evtrav::nn
