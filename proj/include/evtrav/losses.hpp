#pragma once

#include "evtrav/distributions.hpp"

// Squared earth mover's distance between PMFs on an ordered support, its
// expectation under a Dirichlet, and the physics-weighted combination used for
// training. The raw-vector overloads are the training-loop entry points; the
// Pmf/DirichletParams overloads check that supports agree.

namespace evtrav
{

template <typename DerivedP, typename DerivedY>
typename DerivedP::Scalar emd2(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedY>& y)
{
  require(p.size() == y.size(), "emd2: bin counts differ");
  return (cumsum(p) - cumsum(y)).squaredNorm();
}

template <typename Scalar>
Scalar emd2(const Pmf<Scalar>& p, const Pmf<Scalar>& y)
{
  require(p.disc() == y.disc(), "emd2: discretizations differ");
  return emd2(p.masses(), y.masses());
}

/// E_{p ~ Dir(beta)} [emd2(p, y)] in closed form.
template <typename DerivedB, typename DerivedY>
typename DerivedB::Scalar uemd2(const Eigen::MatrixBase<DerivedB>& beta, const Eigen::MatrixBase<DerivedY>& y)
{
  using Scalar = typename DerivedB::Scalar;
  require(beta.size() == y.size(), "uemd2: bin counts differ");
  const Vector<Scalar> cs_beta = cumsum(beta);
  const Scalar total = cs_beta[cs_beta.size() - 1];
  const Vector<Scalar> cs_mean = cs_beta / total;
  const Vector<Scalar> cs_y = cumsum(y);
  return cs_mean.dot((cs_beta.array() + Scalar(1)).matrix()) / (total + 1) + (cs_y - 2 * cs_mean).dot(cs_y);
}

template <typename Scalar>
Scalar uemd2(const DirichletParams<Scalar>& q, const Pmf<Scalar>& y)
{
  require(q.disc() == y.disc(), "uemd2: discretizations differ");
  return uemd2(q.beta(), y.masses());
}

/// Gradient of uemd2 with respect to beta.
template <typename DerivedB, typename DerivedY>
Vector<typename DerivedB::Scalar> uemd2_grad(const Eigen::MatrixBase<DerivedB>& beta,
                                             const Eigen::MatrixBase<DerivedY>& y)
{
  using Scalar = typename DerivedB::Scalar;
  require(beta.size() == y.size(), "uemd2_grad: bin counts differ");
  const Eigen::Index n = beta.size();
  const Vector<Scalar> cs_beta = cumsum(beta);
  const Vector<Scalar> cs_y = cumsum(y);
  const Scalar total = cs_beta[n - 1];
  const Scalar denom = total * (total + 1);

  // Every summand depends on total; cs_beta[k] depends on beta[b] only for b <= k.
  Scalar through_total = 0;
  Vector<Scalar> direct(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Scalar a = cs_beta[k];
    through_total += -a * (a + 1) * (2 * total + 1) / (denom * denom) + 2 * cs_y[k] * a / (total * total);
    direct[k] = (2 * a + 1) / denom - 2 * cs_y[k] / total;
  }
  Vector<Scalar> grad(n);
  Scalar suffix = 0;
  for (Eigen::Index b = n - 1; b >= 0; --b) {
    suffix += direct[b];
    grad[b] = suffix + through_total;
  }
  return grad;
}

template <typename DerivedB, typename DerivedY, typename DerivedP>
typename DerivedB::Scalar upi_loss(const Eigen::MatrixBase<DerivedB>& beta, const Eigen::MatrixBase<DerivedY>& y,
                                   const Eigen::MatrixBase<DerivedP>& p_phys, typename DerivedB::Scalar kappa)
{
  require(kappa >= 0, "upi_loss: kappa must be non-negative");
  const auto data_term = uemd2(beta, y);
  return kappa == 0 ? data_term : data_term + kappa * uemd2(beta, p_phys);
}

/// Data term plus kappa times the expected distance to the physics PMF.
template <typename Scalar>
Scalar upi_loss(const DirichletParams<Scalar>& q, const Pmf<Scalar>& y, const Pmf<Scalar>& p_phys, Scalar kappa)
{
  require(q.disc() == y.disc() && q.disc() == p_phys.disc(), "upi_loss: discretizations differ");
  return upi_loss(q.beta(), y.masses(), p_phys.masses(), kappa);
}

template <typename DerivedB, typename DerivedY, typename DerivedP>
Vector<typename DerivedB::Scalar> upi_loss_grad(const Eigen::MatrixBase<DerivedB>& beta,
                                                const Eigen::MatrixBase<DerivedY>& y,
                                                const Eigen::MatrixBase<DerivedP>& p_phys,
                                                typename DerivedB::Scalar kappa)
{
  require(kappa >= 0, "upi_loss_grad: kappa must be non-negative");
  Vector<typename DerivedB::Scalar> grad = uemd2_grad(beta, y);
  if (kappa != 0) {
    grad += kappa * uemd2_grad(beta, p_phys);
  }
  return grad;
}

template <typename Scalar>
Vector<Scalar> upi_loss_grad(const DirichletParams<Scalar>& q, const Pmf<Scalar>& y, const Pmf<Scalar>& p_phys,
                             Scalar kappa)
{
  require(q.disc() == y.disc() && q.disc() == p_phys.disc(), "upi_loss_grad: discretizations differ");
  return upi_loss_grad(q.beta(), y.masses(), p_phys.masses(), kappa);
}

}  // namespace evtrav
