#pragma once

#include <cstdint>
#include <vector>

#include "evtrav/nn.hpp"

namespace evtrav::nn
{

/// Density on R^d obtained by pushing z through an invertible map T into a
/// standard normal: log p(z) = log N(T(z)) + log|det dT/dz|.
///
/// T is an elementwise affine normalization followed by affine coupling layers
/// that alternate which half of the coordinates conditions the other half.
/// Coupling scale heads start at zero, so a fresh flow with an identity
/// normalization is the base density.
class FlowDensity
{
public:
  struct Config
  {
    int latent_dim = 8;
    int num_couplings = 4;
    int hidden_width = 16;
    /// Bound on each coupling's log-scale output.
    double max_log_scale = 3.0;
    std::uint64_t seed = 0;
  };

  struct Tape
  {
    std::vector<MatrixXd> layer_inputs;
    std::vector<Mlp::Tape> conditioner_tapes;
    std::vector<MatrixXd> log_scales;
    std::vector<MatrixXd> raw_log_scales;
    MatrixXd output;
  };

  FlowDensity() = default;
  explicit FlowDensity(const Config& config);

  int latent_dim() const { return config_.latent_dim; }
  const Config& config() const { return config_; }

  /// Row vector of log densities, one per column of z.
  Eigen::RowVectorXd log_density(const MatrixXd& z, Tape* tape = nullptr) const;
  /// Given dL/dlog_density per sample, accumulates parameter gradients and
  /// returns dL/dz.
  MatrixXd backward(const Tape& tape, const Eigen::RowVectorXd& dlog_density);

  /// T(z) and its inverse.
  MatrixXd forward(const MatrixXd& z) const;
  MatrixXd inverse(const MatrixXd& u) const;

  /// Sets the normalization so that the given samples map to zero mean and
  /// unit variance per coordinate.
  void initialize_normalization(const MatrixXd& z);

  void collect(ParameterSet& out, const std::string& prefix);

  static double base_log_density(const VectorXd& u);

private:
  // Coordinates [0, split) condition [split, d) in even layers and the other way round in odd ones.
  bool conditions_on_head(std::size_t layer) const { return layer % 2 == 0; }
  int head_size() const { return config_.latent_dim / 2; }

  Config config_;
  VectorXd norm_log_scale_;
  VectorXd norm_shift_;
  VectorXd norm_log_scale_grad_;
  VectorXd norm_shift_grad_;
  std::vector<Mlp> conditioners_;
};

}  // namespace evtrav::nn
