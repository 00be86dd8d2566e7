#pragma once

// Independent reference computations used only by the test suites. Nothing
// here calls into the library's special functions, cumulative sums or tail
// statistics.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace evtrav::oracle
{

struct Estimate
{
  double mean = 0;
  double std_error = 0;
};

inline Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& beta, std::mt19937_64& rng)
{
  Eigen::VectorXd x(beta.size());
  for (Eigen::Index b = 0; b < beta.size(); ++b) {
    std::gamma_distribution<double> g(beta[b], 1.0);
    x[b] = g(rng);
  }
  return x / x.sum();
}

/// Standard normal by the 128-layer ziggurat (Doornik's ZIGNOR layout). One
/// 64-bit draw supplies both the layer index (low 7 bits) and the abscissa
/// (top 53 bits).
class ZigguratNormal
{
public:
  ZigguratNormal()
  {
    double f = std::exp(-0.5 * kR * kR);
    x_[0] = kV / f;
    x_[1] = kR;
    x_[128] = 0;
    for (int i = 2; i < 128; ++i) {
      x_[i] = std::sqrt(-2 * std::log(kV / x_[i - 1] + f));
      f = std::exp(-0.5 * x_[i] * x_[i]);
    }
    for (int i = 0; i < 128; ++i) {
      ratio_[i] = x_[i + 1] / x_[i];
    }
  }

  double operator()(std::mt19937_64& rng) const
  {
    for (;;) {
      const std::uint64_t bits = rng();
      const double u = 2 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1;
      const auto i = static_cast<std::size_t>(bits & 0x7F);
      if (std::abs(u) < ratio_[i]) {
        return u * x_[i];
      }
      if (i == 0) {
        return tail(rng, u < 0);
      }
      const double x = u * x_[i];
      const double f0 = std::exp(-0.5 * (x_[i] * x_[i] - x * x));
      const double f1 = std::exp(-0.5 * (x_[i + 1] * x_[i + 1] - x * x));
      if (f1 + positive_uniform(rng) * (f0 - f1) < 1.0) {
        return x;
      }
    }
  }

  static double positive_uniform(std::mt19937_64& rng)
  {
    double w = 0;
    do {
      w = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    } while (w == 0);
    return w;
  }

  static constexpr double kR = 3.442619855899;

private:
  static constexpr double kV = 9.91256303526217e-3;

  static double tail(std::mt19937_64& rng, bool negative)
  {
    double x = 0;
    double y = 0;
    do {
      x = std::log(positive_uniform(rng)) / kR;
      y = std::log(positive_uniform(rng));
    } while (-2 * y < x * x);
    return negative ? x - kR : kR - x;
  }

  std::array<double, 129> x_{};
  std::array<double, 128> ratio_{};
};

/// Gamma(shape, 1) by Marsaglia-Tsang on ziggurat normals and plain 53-bit
/// uniforms; avoids the long-double path of the standard distributions, which
/// dominates long Monte-Carlo runs. Shapes below one use the U^(1/a) boost.
class FastGamma
{
public:
  explicit FastGamma(double shape) : boost_(shape < 1), inv_shape_(1 / shape)
  {
    d_ = (boost_ ? shape + 1 : shape) - 1.0 / 3.0;
    c_ = 1 / std::sqrt(9 * d_);
  }

  double operator()(std::mt19937_64& rng) const
  {
    static const ZigguratNormal normal;
    double x = 0;
    double v = 0;
    for (;;) {
      do {
        x = normal(rng);
        v = 1 + c_ * x;
      } while (v <= 0);
      v = v * v * v;
      const double u = ZigguratNormal::positive_uniform(rng);
      if (u < 1 - 0.0331 * x * x * x * x || std::log(u) < 0.5 * x * x + d_ * (1 - v + std::log(v))) {
        break;
      }
    }
    double r = d_ * v;
    if (boost_) {
      r *= std::exp(std::log(ZigguratNormal::positive_uniform(rng)) * inv_shape_);
    }
    return r;
  }

private:
  bool boost_;
  double inv_shape_;
  double d_ = 0;
  double c_ = 0;
};

inline double emd2_by_loops(const Eigen::VectorXd& p, const Eigen::VectorXd& y)
{
  double total = 0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    double diff = 0;
    for (Eigen::Index j = 0; j <= k; ++j) {
      diff += p[j] - y[j];
    }
    total += diff * diff;
  }
  return total;
}

inline Estimate monte_carlo(std::size_t samples, const std::function<double()>& draw)
{
  double sum = 0;
  double sum_sq = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double v = draw();
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

inline Estimate expected_emd2(const Eigen::VectorXd& beta, const Eigen::VectorXd& y, std::size_t samples,
                              std::mt19937_64& rng)
{
  return monte_carlo(samples, [&] { return emd2_by_loops(sample_dirichlet(beta, rng), y); });
}

inline Estimate dirichlet_entropy(const Eigen::VectorXd& beta, std::size_t samples, std::mt19937_64& rng)
{
  double log_norm = std::lgamma(beta.sum());
  for (Eigen::Index b = 0; b < beta.size(); ++b) {
    log_norm -= std::lgamma(beta[b]);
  }
  return monte_carlo(samples, [&] {
    const Eigen::VectorXd x = sample_dirichlet(beta, rng);
    double log_density = log_norm;
    for (Eigen::Index b = 0; b < beta.size(); ++b) {
      log_density += (beta[b] - 1) * std::log(x[b]);
    }
    return -log_density;
  });
}

/// Worst-fraction average over an explicit list of equally weighted atoms.
/// counts[b] atoms sit at centers[b]; sum(counts) atoms in total.
inline double atom_tail_average(const std::vector<long>& counts, const Eigen::VectorXd& centers, double alpha,
                                bool low_is_worst)
{
  std::vector<double> atoms;
  long total = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    total += counts[b];
    atoms.insert(atoms.end(), static_cast<std::size_t>(counts[b]), centers[static_cast<Eigen::Index>(b)]);
  }
  if (low_is_worst) {
    std::sort(atoms.begin(), atoms.end());
  } else {
    std::sort(atoms.begin(), atoms.end(), std::greater<>());
  }
  const double want = alpha * static_cast<double>(total);
  const auto whole = static_cast<std::size_t>(std::floor(want));
  double sum = 0;
  for (std::size_t i = 0; i < whole; ++i) {
    sum += atoms[i];
  }
  const double frac = want - static_cast<double>(whole);
  if (frac > 0 && whole < atoms.size()) {
    sum += frac * atoms[whole];
  }
  return sum / want;
}

/// Central finite-difference gradient of f at x.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h)
{
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x;
    Eigen::VectorXd down = x;
    up[i] += h;
    down[i] -= h;
    g[i] = (f(up) - f(down)) / (2 * h);
  }
  return g;
}

inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8)
{
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Infinity-norm error of a against reference b, relative to the size of b.
inline double relative_error_inf(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace evtrav::oracle
