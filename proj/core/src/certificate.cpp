#include <spectra_lr/certificate.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>

namespace spectra_lr {

CompositeDual CompositeDual::fromSparse(SparseMatrix m) {
  CompositeDual c;
  m.makeCompressed();
  c.m_ = std::move(m);
  return c;
}

CompositeDual CompositeDual::fromDense(Matrix m) {
  CompositeDual c;
  c.m_ = std::move(m);
  return c;
}

Index CompositeDual::rows() const {
  return std::visit([](const auto& m) -> Index { return m.rows(); }, m_);
}

Index CompositeDual::cols() const {
  return std::visit([](const auto& m) -> Index { return m.cols(); }, m_);
}

Matrix CompositeDual::times(const Matrix& x) const {
  if (x.rows() != cols()) throw InputError("CompositeDual::times: shape mismatch");
  return std::visit([&x](const auto& m) -> Matrix { return m * x; }, m_);
}

Matrix CompositeDual::transposeTimes(const Matrix& y) const {
  if (y.rows() != rows()) throw InputError("CompositeDual::transposeTimes: shape mismatch");
  return std::visit([&y](const auto& m) -> Matrix { return m.transpose() * y; }, m_);
}

Matrix CompositeDual::toDense() const {
  if (isSparse()) return Matrix(sparse());
  return dense();
}

double CompositeDual::squaredNorm() const {
  return std::visit([](const auto& m) { return m.squaredNorm(); }, m_);
}

namespace {

struct PowerResult {
  double rayleigh = 0.0;
  int iterations = 0;
  bool converged = false;
};

PowerResult powerIterate(const CompositeDual& m, Vector v, const PowerIterationOptions& opts) {
  PowerResult res;
  v.normalize();
  double prev = -1.0;
  for (int it = 1; it <= opts.maxIterations; ++it) {
    const Vector w = m.transposeTimes(v);
    const double rho = w.squaredNorm();
    res.rayleigh = std::max(res.rayleigh, rho);
    res.iterations = it;
    if (rho == 0.0) {
      res.converged = true;
      break;
    }
    if (prev >= 0.0 && std::abs(rho - prev) <= opts.tolerance * rho) {
      res.converged = true;
      break;
    }
    prev = rho;
    v = m.times(w);
    const double n = v.norm();
    if (!(n > 0.0)) {
      res.converged = true;
      break;
    }
    v /= n;
  }
  return res;
}

}  // namespace

GapReport dualityGap(const ManifoldPoint& u, const CompositeDual& m, double gValue,
                     const PowerIterationOptions& opts) {
  if (m.rows() != u.rows()) throw InputError("dualityGap: U and M row counts differ");
  GapReport rep;
  const Matrix& U = u.matrix();
  const Matrix mtu = m.transposeTimes(U);  // T x r
  const double captured = mtu.squaredNorm();

  PowerResult pr = powerIterate(m, Vector::Ones(m.rows()), opts);
  if (pr.rayleigh == 0.0 && m.squaredNorm() > 0.0) {
    // All-ones start orthogonal to the row space of M^T; retry from a ramp.
    pr = powerIterate(m, Vector::LinSpaced(m.rows(), 1.0, static_cast<double>(m.rows())), opts);
  }

  // Rayleigh-Ritz on range(U): its top value dominates ||U^T M||_F^2 because
  // ||U||_F = 1, so the reported gap cannot go negative from a slow start.
  const Matrix gram = U.transpose() * U;
  Eigen::SelfAdjointEigenSolver<Matrix> ge(gram);
  double ritz = 0.0;
  {
    const Vector& ev = ge.eigenvalues();
    const double floor = 1e-14 * std::max(1.0, ev.maxCoeff());
    Vector invSqrt(ev.size());
    for (Index i = 0; i < ev.size(); ++i) invSqrt(i) = ev(i) > floor ? 1.0 / std::sqrt(ev(i)) : 0.0;
    // M^T times an orthonormal basis of range(U).
    const Matrix mtb = mtu * ge.eigenvectors() * invSqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> re(mtb.transpose() * mtb, Eigen::EigenvaluesOnly);
    ritz = re.eigenvalues().size() > 0 ? re.eigenvalues().maxCoeff() : 0.0;
  }

  const double sigma1Sq = std::max({pr.rayleigh, ritz, 0.0});
  rep.sigma1 = std::sqrt(sigma1Sq);
  rep.gap = 0.5 * (sigma1Sq - captured);
  rep.relativeGap = rep.gap / std::max(1.0, std::abs(gValue));
  rep.powerConverged = pr.converged;
  rep.powerIterations = pr.iterations;
  return rep;
}

GapReport dualityGap(const ManifoldPoint& u, const DualCertificate& cert, double gValue,
                     const PowerIterationOptions& opts) {
  return dualityGap(u, cert.m, gValue, opts);
}

FactoredPrimal reconstructPrimal(const ManifoldPoint& u, const CompositeDual& m) {
  if (m.rows() != u.rows()) throw InputError("reconstructPrimal: U and M row counts differ");
  FactoredPrimal w;
  w.left = u.matrix();
  w.right = m.transposeTimes(u.matrix()).transpose();
  return w;
}

FactoredPrimal reconstructPrimal(const ManifoldPoint& u, const DualCertificate& cert) {
  return reconstructPrimal(u, cert.m);
}

}  // namespace spectra_lr
