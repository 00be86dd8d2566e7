#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "evtrav/common.hpp"
#include "evtrav/special.hpp"

namespace evtrav
{

/// B equal-width cells spanning [lo, hi]; bin b is represented by its midpoint.
class Discretization
{
public:
  Discretization(int num_bins, double lo, double hi) : num_bins_(num_bins), lo_(lo), hi_(hi)
  {
    require(num_bins >= 2, "Discretization: need at least two bins");
    require(hi > lo, "Discretization: empty range");
  }

  static Discretization traction(int num_bins = 12) { return {num_bins, 0.0, 1.0}; }
  static Discretization angle(int num_bins = 12, double max_rad = std::numbers::pi / 4)
  {
    return {num_bins, 0.0, max_rad};
  }

  int size() const { return num_bins_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double width() const { return (hi_ - lo_) / num_bins_; }
  double center(int b) const { return lo_ + (b + 0.5) * width(); }

  template <typename Scalar = double>
  Vector<Scalar> centers() const
  {
    Vector<Scalar> c(num_bins_);
    for (int b = 0; b < num_bins_; ++b) {
      c[b] = static_cast<Scalar>(center(b));
    }
    return c;
  }

  /// Index of the cell containing value, after clamping into [lo, hi].
  int bin_of(double value) const
  {
    if (!(value > lo_)) {
      return 0;
    }
    const int b = static_cast<int>(std::floor((value - lo_) / width()));
    return std::clamp(b, 0, num_bins_ - 1);
  }

  friend bool operator==(const Discretization&, const Discretization&) = default;

private:
  int num_bins_;
  double lo_;
  double hi_;
};

inline constexpr double kPmfTolerance = 1e-9;
inline constexpr double kPmfRenormalizeLimit = 1e-6;

/// Normalized mass over the bins of a Discretization.
template <typename Scalar = double>
class Pmf
{
public:
  Pmf(Vector<Scalar> masses, Discretization disc) : masses_(std::move(masses)), disc_(disc)
  {
    require(masses_.size() == disc_.size(), "Pmf: mass count does not match bin count");
    for (Eigen::Index b = 0; b < masses_.size(); ++b) {
      require(std::isfinite(static_cast<double>(masses_[b])), "Pmf: non-finite mass");
      require(masses_[b] >= Scalar(-kPmfTolerance), "Pmf: negative mass");
      masses_[b] = std::max(masses_[b], Scalar(0));
    }
    const Scalar total = masses_.sum();
    require(std::abs(static_cast<double>(total) - 1.0) < kPmfRenormalizeLimit, "Pmf: masses do not sum to one");
    masses_ /= total;
  }

  static Pmf uniform(const Discretization& disc)
  {
    return Pmf(Vector<Scalar>::Constant(disc.size(), Scalar(1) / disc.size()), disc);
  }

  const Vector<Scalar>& masses() const { return masses_; }
  const Discretization& disc() const { return disc_; }
  int size() const { return disc_.size(); }
  Scalar operator[](int b) const { return masses_[b]; }

private:
  Vector<Scalar> masses_;
  Discretization disc_;
};

/// Dirichlet concentration vector over PMFs of a Discretization.
template <typename Scalar = double>
class DirichletParams
{
public:
  DirichletParams(Vector<Scalar> beta, Discretization disc) : beta_(std::move(beta)), disc_(disc)
  {
    require(beta_.size() == disc_.size(), "DirichletParams: size does not match bin count");
    for (Eigen::Index b = 0; b < beta_.size(); ++b) {
      require(beta_[b] > Scalar(0) && std::isfinite(static_cast<double>(beta_[b])),
              "DirichletParams: concentrations must be positive and finite");
    }
  }

  const Vector<Scalar>& beta() const { return beta_; }
  const Discretization& disc() const { return disc_; }
  Scalar total_evidence() const { return beta_.sum(); }
  int size() const { return disc_.size(); }

private:
  Vector<Scalar> beta_;
  Discretization disc_;
};

template <typename Derived>
Vector<typename Derived::Scalar> cumsum(const Eigen::MatrixBase<Derived>& values)
{
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out(values.size());
  Scalar running = 0;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    running += values(k);
    out[k] = running;
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> cumsum(const Pmf<Scalar>& p)
{
  return cumsum(p.masses());
}

template <typename Scalar>
Pmf<Scalar> dirichlet_mean(const DirichletParams<Scalar>& d)
{
  return Pmf<Scalar>(d.beta() / d.total_evidence(), d.disc());
}

template <typename Scalar>
Scalar pmf_mean(const Pmf<Scalar>& p)
{
  return p.masses().dot(p.disc().template centers<Scalar>());
}

namespace detail
{

// Covers exactly alpha of the mass walking bins in the given order, splitting
// the boundary bin.
template <typename Scalar>
Scalar tail_average(const Pmf<Scalar>& p, Scalar alpha, bool from_low)
{
  require(alpha > Scalar(0) && alpha <= Scalar(1), "cvar: alpha must lie in (0, 1]");
  const int n = p.size();
  Scalar covered = 0;
  Scalar weighted = 0;
  for (int i = 0; i < n && covered < alpha; ++i) {
    const int b = from_low ? i : n - 1 - i;
    const Scalar take = std::min(p[b], alpha - covered);
    covered += take;
    weighted += take * static_cast<Scalar>(p.disc().center(b));
  }
  // Rounding can leave covered marginally below alpha when alpha == 1.
  return weighted / covered;
}

}  // namespace detail

/// Expected value of the lowest alpha fraction of the mass.
template <typename Scalar>
Scalar cvar_left(const Pmf<Scalar>& p, Scalar alpha)
{
  return detail::tail_average(p, alpha, true);
}

/// Expected value of the highest alpha fraction of the mass.
template <typename Scalar>
Scalar cvar_right(const Pmf<Scalar>& p, Scalar alpha)
{
  return detail::tail_average(p, alpha, false);
}

template <typename Scalar = double>
Pmf<Scalar> one_hot_encode(double value, const Discretization& disc)
{
  Vector<Scalar> m = Vector<Scalar>::Zero(disc.size());
  m[disc.bin_of(value)] = 1;
  return Pmf<Scalar>(std::move(m), disc);
}

template <typename Derived>
typename Derived::Scalar dirichlet_entropy(const Eigen::MatrixBase<Derived>& beta)
{
  using Scalar = typename Derived::Scalar;
  const Scalar total = beta.sum();
  const auto bins = static_cast<Scalar>(beta.size());
  Scalar h = -special::log_gamma(total) + (total - bins) * special::digamma(total);
  for (Eigen::Index b = 0; b < beta.size(); ++b) {
    h += special::log_gamma(beta(b)) - (beta(b) - 1) * special::digamma(beta(b));
  }
  return h;
}

/// Differential entropy of Dir(beta).
template <typename Scalar>
Scalar dirichlet_entropy(const DirichletParams<Scalar>& d)
{
  return dirichlet_entropy(d.beta());
}

/// Gradient of the Dirichlet entropy with respect to each concentration.
template <typename Derived>
Vector<typename Derived::Scalar> dirichlet_entropy_grad(const Eigen::MatrixBase<Derived>& beta)
{
  using Scalar = typename Derived::Scalar;
  const Scalar total = beta.sum();
  const Scalar shared = (total - static_cast<Scalar>(beta.size())) * special::trigamma(total);
  Vector<Scalar> g(beta.size());
  for (Eigen::Index b = 0; b < beta.size(); ++b) {
    g[b] = shared - (beta(b) - 1) * special::trigamma(beta(b));
  }
  return g;
}

}  // namespace evtrav
