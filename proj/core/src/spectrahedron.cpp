#include <spectra_lr/spectrahedron.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>
#include <sstream>

namespace spectra_lr {

namespace {

constexpr double kLyapunovFloor = 1e-14;

std::uint64_t fnv1a(const Matrix& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  const Index rows = m.rows();
  const Index cols = m.cols();
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  mix(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return h;
}

void requireShape(const ManifoldPoint& u, const Matrix& z, const char* what) {
  if (z.rows() != u.rows() || z.cols() != u.cols()) {
    std::ostringstream os;
    os << what << ": expected " << u.rows() << "x" << u.cols() << " matrix, got "
       << z.rows() << "x" << z.cols();
    throw InputError(os.str());
  }
}

double unitNormTolerance(Index numel) {
  return 1e-12 * std::max(1.0, std::sqrt(static_cast<double>(numel)));
}

}  // namespace

ManifoldPoint::ManifoldPoint(Matrix u) : u_(std::move(u)), fingerprint_(0) {
  if (u_.cols() < 1 || u_.rows() < u_.cols()) {
    std::ostringstream os;
    os << "manifold point must satisfy d >= r >= 1, got " << u_.rows() << "x" << u_.cols();
    throw InputError(os.str());
  }
  const double n = u_.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > unitNormTolerance(u_.size())) {
    std::ostringstream os;
    os.precision(17);
    os << "manifold point must have unit Frobenius norm, got " << n;
    throw InputError(os.str());
  }
  fingerprint_ = fnv1a(u_);
}

ManifoldPoint::ManifoldPoint(Matrix u, Trusted) : u_(std::move(u)), fingerprint_(fnv1a(u_)) {}

ManifoldPoint ManifoldPoint::normalized(const Matrix& m) {
  if (m.cols() < 1 || m.rows() < m.cols()) {
    std::ostringstream os;
    os << "manifold point must satisfy d >= r >= 1, got " << m.rows() << "x" << m.cols();
    throw InputError(os.str());
  }
  const double n = m.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InputError("cannot normalize a zero or non-finite matrix onto the spectrahedron");
  }
  return ManifoldPoint(m / n, Trusted{});
}

TangentVector::TangentVector(const ManifoldPoint& base, Matrix xi, bool horizontal)
    : xi_(std::move(xi)), base_(base.fingerprint()), horizontal_(horizontal) {
  requireShape(base, xi_, "tangent vector");
}

TangentVector TangentVector::zero(const ManifoldPoint& base) {
  return TangentVector(base, Matrix::Zero(base.rows(), base.cols()), true);
}

void TangentVector::requireBase(const ManifoldPoint& base) const {
  if (base.fingerprint() != base_) {
    throw GeometryError("tangent vector used at a point other than its base point");
  }
}

TangentVector& TangentVector::operator+=(const TangentVector& other) {
  if (other.base_ != base_) {
    throw GeometryError("adding tangent vectors from different tangent spaces");
  }
  xi_ += other.xi_;
  horizontal_ = horizontal_ && other.horizontal_;
  return *this;
}

TangentVector& TangentVector::operator*=(double a) {
  xi_ *= a;
  return *this;
}

TangentVector TangentVector::axpy(double a, const TangentVector& x, const TangentVector& y) {
  if (x.base_ != y.base_) {
    throw GeometryError("axpy on tangent vectors from different tangent spaces");
  }
  TangentVector out = y;
  out.xi_.noalias() += a * x.xi_;
  out.horizontal_ = x.horizontal_ && y.horizontal_;
  return out;
}

TangentVector projectTangent(const ManifoldPoint& u, const Matrix& z) {
  requireShape(u, z, "projectTangent");
  const Matrix& U = u.matrix();
  return TangentVector(u, z - frobeniusInner(z, U) * U, false);
}

Matrix solveLyapunovSkew(const Matrix& gram, const Matrix& rhs) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Matrix& Q = eig.eigenvectors();
  const Vector& D = eig.eigenvalues();
  Matrix L = Q.transpose() * rhs * Q;
  for (Index j = 0; j < L.cols(); ++j) {
    for (Index i = 0; i < L.rows(); ++i) {
      L(i, j) /= std::max(D(i) + D(j), kLyapunovFloor);
    }
  }
  return Q * L * Q.transpose();
}

TangentVector projectHorizontal(const ManifoldPoint& u, const TangentVector& xi) {
  xi.requireBase(u);
  const Matrix& U = u.matrix();
  const Matrix& X = xi.matrix();
  if (U.cols() == 1) {
    return TangentVector(u, X, true);
  }
  const Matrix utx = U.transpose() * X;
  const Matrix lambda = solveLyapunovSkew(U.transpose() * U, utx - utx.transpose());
  return TangentVector(u, X - U * lambda, true);
}

TangentVector projectHorizontal(const ManifoldPoint& u, const Matrix& z) {
  return projectHorizontal(u, projectTangent(u, z));
}

ManifoldPoint retract(const ManifoldPoint& u, const TangentVector& xi, double step) {
  xi.requireBase(u);
  if (!(step >= 0.0) || !std::isfinite(step)) {
    throw InputError("retraction step must be finite and non-negative");
  }
  Matrix moved = u.matrix() + step * xi.matrix();
  // ||U + a xi||^2 = 1 + a^2 ||xi||^2 for tangent xi, so this never vanishes.
  const double n = moved.norm();
  if (!(n > 0.0)) {
    throw GeometryError("retraction produced a zero matrix; direction is not tangent");
  }
  return ManifoldPoint::normalized(moved);
}

TangentVector riemannianGradient(const ManifoldPoint& u, const Matrix& eucGrad) {
  requireShape(u, eucGrad, "riemannianGradient");
  TangentVector g = projectTangent(u, eucGrad);
  return g;
}

TangentVector riemannianHessVec(const ManifoldPoint& u, const Matrix& eucGrad,
                                const Matrix& eucHessVec, const TangentVector& xi) {
  xi.requireBase(u);
  requireShape(u, eucGrad, "riemannianHessVec (gradient)");
  requireShape(u, eucHessVec, "riemannianHessVec (Hessian-vector product)");
  const Matrix& U = u.matrix();
  const Matrix& X = xi.matrix();
  // Derivative of the Riemannian gradient field along xi, then the orthogonal
  // projection onto the horizontal space.
  const double gu = frobeniusInner(eucGrad, U);
  const double mixed = frobeniusInner(eucGrad, X) + frobeniusInner(eucHessVec, U);
  Matrix ambient = eucHessVec - gu * X - mixed * U;
  return projectHorizontal(u, ambient);
}

double innerProduct(const TangentVector& xi, const TangentVector& eta) {
  if (xi.baseFingerprint() != eta.baseFingerprint()) {
    throw GeometryError("inner product of tangent vectors from different tangent spaces");
  }
  return frobeniusInner(xi.matrix(), eta.matrix());
}

TangentVector transport(const ManifoldPoint& to, const TangentVector& v) {
  return projectHorizontal(to, v.matrix());
}

}  // namespace spectra_lr
