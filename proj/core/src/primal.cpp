#include <spectra_lr/primal.hpp>

#include <Eigen/SVD>

#include <cmath>

namespace spectra_lr {

double nuclearNorm(const Matrix& w) {
  if (w.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(w);
  return svd.singularValues().sum();
}

double primalObjective(const ProblemAdapter& problem, const Matrix& w) {
  const double nn = nuclearNorm(w);
  return problem.params().C * problem.loss(w) + 0.5 * nn * nn;
}

double variationalThetaCheck(const Matrix& w) {
  if (w.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double trace = sv.sum();
  if (trace == 0.0) return 0.0;
  // sqrt(W W^T) = U diag(sigma) U^T; pseudo-inverse keeps the nonzero part.
  const double cutoff = 1e-13 * sv(0);
  const Matrix& u = svd.matrixU();
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = trace / sv(i);
  }
  const Matrix thetaPinvW = u * inv.asDiagonal() * (u.transpose() * w);
  return std::abs(frobeniusInner(thetaPinvW, w) - trace * trace);
}

}  // namespace spectra_lr
