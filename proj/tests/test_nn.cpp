#include <doctest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "evtrav/checkpoint.hpp"
#include "evtrav/flow.hpp"
#include "evtrav/nn.hpp"
#include "oracles.hpp"

using namespace evtrav;
using namespace evtrav::nn;

namespace
{

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0)
{
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = n(rng);
  }
  return m;
}

// Flattened parameter vector for finite differences.
VectorXd flatten(const ParameterSet& params)
{
  Eigen::Index total = 0;
  for (const auto& p : params) {
    total += p.size();
  }
  VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& p : params) {
    out.segment(at, p.size()) = p.values();
    at += p.size();
  }
  return out;
}

void assign(const ParameterSet& params, const VectorXd& flat)
{
  Eigen::Index at = 0;
  for (const auto& p : params) {
    p.values() = flat.segment(at, p.size());
    at += p.size();
  }
}

VectorXd flat_grads(const ParameterSet& params)
{
  Eigen::Index total = 0;
  for (const auto& p : params) {
    total += p.size();
  }
  VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& p : params) {
    out.segment(at, p.size()) = p.grads();
    at += p.size();
  }
  return out;
}

FlowDensity random_flow(int d, std::uint64_t seed)
{
  FlowDensity::Config cfg;
  cfg.latent_dim = d;
  cfg.num_couplings = 4;
  cfg.hidden_width = 6;
  cfg.seed = seed;
  FlowDensity flow(cfg);
  ParameterSet params;
  flow.collect(params, "flow");
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.3);
  for (const auto& p : params) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.value[i] += n(rng);
    }
  }
  return flow;
}

}  // namespace

TEST_CASE("mlp with zero parameters outputs zeros")
{
  Mlp mlp({{5, 4, 3}, Activation::tanh, Activation::identity, 1});
  for (auto& layer : mlp.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  std::mt19937_64 rng(2);
  CHECK(mlp.forward(random_matrix(5, 7, rng)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(mlp.forward(random_matrix(4, 1, rng)), DomainError);
  CHECK_THROWS_AS(Mlp({{5, 3}, Activation::tanh, Activation::identity, 1}), DomainError);
}

TEST_CASE("identity dense layer passes input through")
{
  std::mt19937_64 rng(3);
  const MatrixXd x = random_matrix(6, 4, rng);
  CHECK(Dense::identity(6).forward(x) == x);
}

TEST_CASE("mlp backward matches finite differences")
{
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<int> width(1, 8);
    const int in = width(rng);
    const int out = width(rng);
    const auto act = trial % 2 == 0 ? Activation::tanh : Activation::relu;
    Mlp mlp({{in, width(rng), width(rng), out}, act, Activation::tanh, static_cast<std::uint64_t>(trial)});
    ParameterSet params;
    mlp.collect(params, "mlp");
    const MatrixXd x = random_matrix(in, 3, rng);
    const MatrixXd w = random_matrix(out, 3, rng);

    auto loss = [&](const MatrixXd& input) { return (mlp.forward(input).array() * w.array()).sum(); };
    Mlp::Tape tape;
    mlp.forward(x, &tape);
    zero_grads(params);
    const MatrixXd dx = mlp.backward(tape, w);

    const VectorXd theta = flatten(params);
    const VectorXd fd = oracle::central_difference(
        [&](const VectorXd& t) {
          assign(params, t);
          return loss(x);
        },
        theta, 1e-5);
    assign(params, theta);
    CHECK(oracle::relative_error_inf(flat_grads(params), fd) < 1e-4);

    const VectorXd x_flat = Eigen::Map<const VectorXd>(x.data(), x.size());
    const VectorXd fd_x = oracle::central_difference(
        [&](const VectorXd& v) { return loss(Eigen::Map<const MatrixXd>(v.data(), in, 3)); }, x_flat, 1e-5);
    CHECK(oracle::relative_error_inf(Eigen::Map<const VectorXd>(dx.data(), dx.size()), fd_x) < 1e-4);
  }
}

TEST_CASE("softmax and sigmoid gradients")
{
  std::mt19937_64 rng(5);
  const MatrixXd logits = random_matrix(5, 1, rng);
  const MatrixXd w = random_matrix(5, 1, rng);
  const MatrixXd p = softmax(logits);
  CHECK(p.sum() == doctest::Approx(1.0));
  const MatrixXd analytic = softmax_backward(p, w);
  const VectorXd fd = oracle::central_difference(
      [&](const VectorXd& l) { return softmax(l).col(0).dot(w.col(0)); }, logits.col(0), 1e-6);
  CHECK(oracle::relative_error_inf(analytic.col(0), fd) < 1e-6);
  CHECK(sigmoid(MatrixXd::Zero(1, 1))(0, 0) == 0.5);
}

TEST_CASE("identity-initialized flow is the standard normal")
{
  FlowDensity flow({2, 4, 8, 3.0, 1});
  CHECK(flow.log_density(MatrixXd::Zero(2, 1))(0) == doctest::Approx(std::log(1.0 / (2 * std::numbers::pi))));
  std::mt19937_64 rng(6);
  const MatrixXd z = random_matrix(2, 50, rng, 2.0);
  const Eigen::RowVectorXd lp = flow.log_density(z);
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    CHECK(std::abs(lp(i) - FlowDensity::base_log_density(z.col(i))) < 1e-9);
  }
  CHECK_THROWS_AS(flow.log_density(MatrixXd::Constant(2, 1, std::nan(""))), DomainError);
}

TEST_CASE("flow is invertible")
{
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FlowDensity flow = random_flow(seed % 2 == 0 ? 8 : 5, seed);
    const MatrixXd z = random_matrix(flow.latent_dim(), 40, rng, 1.5);
    CHECK((flow.inverse(flow.forward(z)) - z).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("random flow density integrates to one")
{
  const FlowDensity flow = random_flow(2, 11);
  std::mt19937_64 rng(8);
  const double sigma = 3.0;
  constexpr int kSamples = 200000;
  const MatrixXd z = random_matrix(2, kSamples, rng, sigma);
  const Eigen::RowVectorXd lp = flow.log_density(z);
  double total = 0;
  for (int i = 0; i < kSamples; ++i) {
    const double log_q = -0.5 * z.col(i).squaredNorm() / (sigma * sigma) - std::log(2 * std::numbers::pi * sigma * sigma);
    total += std::exp(lp(i) - log_q);
  }
  CHECK(std::abs(total / kSamples - 1.0) < 5e-2);
}

TEST_CASE("flow backward matches finite differences")
{
  FlowDensity flow = random_flow(4, 21);
  ParameterSet params;
  flow.collect(params, "flow");
  std::mt19937_64 rng(9);
  const MatrixXd z = random_matrix(4, 3, rng);
  const Eigen::RowVectorXd w = random_matrix(1, 3, rng);

  FlowDensity::Tape tape;
  flow.log_density(z, &tape);
  zero_grads(params);
  const MatrixXd dz = flow.backward(tape, w);

  const VectorXd theta = flatten(params);
  const VectorXd fd = oracle::central_difference(
      [&](const VectorXd& t) {
        assign(params, t);
        return flow.log_density(z).dot(w);
      },
      theta, 1e-5);
  assign(params, theta);
  CHECK(oracle::relative_error_inf(flat_grads(params), fd) < 1e-4);

  const VectorXd z_flat = Eigen::Map<const VectorXd>(z.data(), z.size());
  const VectorXd fd_z = oracle::central_difference(
      [&](const VectorXd& v) { return flow.log_density(Eigen::Map<const MatrixXd>(v.data(), 4, 3)).dot(w); }, z_flat,
      1e-5);
  CHECK(oracle::relative_error_inf(Eigen::Map<const VectorXd>(dz.data(), dz.size()), fd_z) < 1e-4);
}

TEST_CASE("flow normalization whitens samples")
{
  FlowDensity flow({3, 0, 4, 3.0, 0});
  std::mt19937_64 rng(10);
  MatrixXd z = random_matrix(3, 500, rng, 0.1);
  z.array() += 4.0;
  flow.initialize_normalization(z);
  const MatrixXd u = flow.forward(z);
  CHECK(u.rowwise().mean().cwiseAbs().maxCoeff() < 1e-9);
  CHECK(((u.rowwise().squaredNorm() / 500.0).array() - 1.0).abs().maxCoeff() < 1e-4);
}

TEST_CASE("adam on a quadratic bowl")
{
  VectorXd w(3);
  w << 1.0, -0.5, 0.3;
  AdamState state;
  AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  double start = w.norm();
  double late_max = 0;
  for (int step = 0; step < 100; ++step) {
    adam_step(w, 2 * w, state, cfg);
    if (step >= 50) {
      late_max = std::max(late_max, w.norm());
    }
  }
  CHECK(w.norm() < 1e-2);
  CHECK(late_max < start);
}

TEST_CASE("adam first step has learning-rate magnitude")
{
  VectorXd w = VectorXd::Constant(1, 1.0);
  AdamState state;
  adam_step(w, 2 * w, state, {0.1, 0.9, 0.999, 1e-8});
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-7));

  VectorXd still = VectorXd::Constant(4, 0.7);
  AdamState s2;
  adam_step(still, VectorXd::Zero(4), s2, {});
  CHECK(still == VectorXd::Constant(4, 0.7));
}

TEST_CASE("gradient clipping caps the global norm")
{
  Dense d = Dense::identity(2);
  ParameterSet params;
  d.collect(params, "d");
  d.weight_grad.setConstant(10.0);
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(20.0));
  CHECK(grad_norm(params) == doctest::Approx(10.0));
}

TEST_CASE("checkpoint round-trips bit-exactly")
{
  FlowDensity flow = random_flow(8, 31);
  ParameterSet params;
  flow.collect(params, "flow");
  Checkpoint cp;
  cp.put_parameters(params);
  cp.put_scalar("tiny", 4.9406564584124654e-324);
  cp.put_scalar("third", 1.0 / 3.0);
  std::stringstream buffer;
  cp.write(buffer);
  const Checkpoint back = Checkpoint::read(buffer);
  CHECK(back == cp);
  CHECK(back.get_scalar("third") == 1.0 / 3.0);

  FlowDensity other = random_flow(8, 99);
  ParameterSet other_params;
  other.collect(other_params, "flow");
  back.load_parameters(other_params);
  std::mt19937_64 rng(1);
  const MatrixXd z = random_matrix(8, 5, rng);
  CHECK(other.log_density(z) == flow.log_density(z));

  std::stringstream bad("not-a-checkpoint 1");
  CHECK_THROWS_AS(Checkpoint::read(bad), DomainError);
}

TEST_CASE("same seed gives identical initialization")
{
  Mlp a({{6, 5, 4}, Activation::tanh, Activation::identity, 42});
  Mlp b({{6, 5, 4}, Activation::tanh, Activation::identity, 42});
  Mlp c({{6, 5, 4}, Activation::tanh, Activation::identity, 43});
  CHECK(a.layers()[0].weight == b.layers()[0].weight);
  CHECK(a.layers()[0].weight != c.layers()[0].weight);
}
