#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evtrav/common.hpp"

// Small trainable building blocks. Inputs are batched column-wise: a matrix
// with one column per sample. Each block caches what it needs on a Tape during
// forward() and accumulates parameter gradients in backward().

namespace evtrav::nn
{

enum class Activation
{
  identity,
  tanh,
  relu,
};

Activation parse_activation(const std::string& name);

/// Named view of one trainable array and its gradient.
struct Parameter
{
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<VectorXd> values() const { return {value, size()}; }
  Eigen::Map<VectorXd> grads() const { return {grad, size()}; }
};

using ParameterSet = std::vector<Parameter>;

void zero_grads(const ParameterSet& params);
double grad_norm(const ParameterSet& params);
/// Rescales all gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(const ParameterSet& params, double max_norm);

class Dense
{
public:
  Dense() = default;
  /// Weights and biases drawn from U(-1/sqrt(in), 1/sqrt(in)).
  Dense(int in, int out, std::mt19937_64& rng);

  static Dense identity(int width);

  MatrixXd forward(const MatrixXd& x) const;
  /// Accumulates parameter gradients and returns the input gradient.
  MatrixXd backward(const MatrixXd& x, const MatrixXd& dy);

  void collect(ParameterSet& out, const std::string& prefix);

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  MatrixXd weight;
  VectorXd bias;
  MatrixXd weight_grad;
  VectorXd bias_grad;
};

struct MlpConfig
{
  std::vector<int> layer_widths;
  Activation activation = Activation::tanh;
  Activation output_activation = Activation::identity;
  std::uint64_t seed = 0;
};

class Mlp
{
public:
  struct Tape
  {
    std::vector<MatrixXd> inputs;
    std::vector<MatrixXd> outputs;
  };

  Mlp() = default;
  explicit Mlp(const MlpConfig& config);

  MatrixXd forward(const MatrixXd& x, Tape* tape = nullptr) const;
  MatrixXd backward(const Tape& tape, const MatrixXd& dy);

  void collect(ParameterSet& out, const std::string& prefix);

  int input_width() const { return layers_.front().in(); }
  int output_width() const { return layers_.back().out(); }
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }

private:
  std::vector<Dense> layers_;
  Activation hidden_ = Activation::tanh;
  Activation output_ = Activation::identity;
};

/// Column-wise softmax.
MatrixXd softmax(const MatrixXd& logits);
/// Gradient through column-wise softmax given its output.
MatrixXd softmax_backward(const MatrixXd& probs, const MatrixXd& dprobs);
MatrixXd sigmoid(const MatrixXd& x);

struct AdamConfig
{
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState
{
  VectorXd first_moment;
  VectorXd second_moment;
  long step = 0;
};

/// One bias-corrected Adam update of params in place.
void adam_step(Eigen::Ref<VectorXd> params, const Eigen::Ref<const VectorXd>& grads, AdamState& state,
               const AdamConfig& config);

class Adam
{
public:
  Adam(const ParameterSet& params, AdamConfig config);
  void step();
  const AdamConfig& config() const { return config_; }

private:
  ParameterSet params_;
  std::vector<AdamState> states_;
  AdamConfig config_;
};

}  // namespace evtrav::nn
