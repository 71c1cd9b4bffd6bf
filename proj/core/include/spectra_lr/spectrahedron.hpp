#pragma once

// Spectrahedron manifold {U in R^{d x r} : ||U||_F = 1} modulo the right
// action of the orthogonal group O(r). Points are represented in the total
// space; tangent vectors carry a fingerprint of the point they live at.

#include <spectra_lr/types.hpp>

#include <cstdint>

namespace spectra_lr {

/// Unit Frobenius-norm d x r matrix, d >= r >= 1.
class ManifoldPoint {
 public:
  /// Wraps `u`; throws InputError unless ||u||_F = 1 to within 1e-12 (scaled).
  explicit ManifoldPoint(Matrix u);

  /// Rescales `m` to unit Frobenius norm. Throws on a zero matrix.
  static ManifoldPoint normalized(const Matrix& m);

  const Matrix& matrix() const { return u_; }
  Index rows() const { return u_.rows(); }
  Index cols() const { return u_.cols(); }
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  struct Trusted {};
  ManifoldPoint(Matrix u, Trusted);

  Matrix u_;
  std::uint64_t fingerprint_;
};

/// Element of the tangent space T_U of the total space, tagged with U.
class TangentVector {
 public:
  TangentVector(const ManifoldPoint& base, Matrix xi, bool horizontal);

  static TangentVector zero(const ManifoldPoint& base);

  const Matrix& matrix() const { return xi_; }
  std::uint64_t baseFingerprint() const { return base_; }
  bool isHorizontal() const { return horizontal_; }
  double norm() const { return xi_.norm(); }

  /// Requires `base` to be the point this vector was created at.
  void requireBase(const ManifoldPoint& base) const;

  TangentVector& operator+=(const TangentVector& other);
  TangentVector& operator*=(double a);
  friend TangentVector operator+(TangentVector a, const TangentVector& b) { return a += b; }
  friend TangentVector operator*(double a, TangentVector v) { return v *= a; }
  /// a * x + y with matching base points.
  static TangentVector axpy(double a, const TangentVector& x, const TangentVector& y);

 private:
  Matrix xi_;
  std::uint64_t base_;
  bool horizontal_;
};

/// Psi_U(Z) = Z - trace(Z^T U) U.
TangentVector projectTangent(const ManifoldPoint& u, const Matrix& z);

/// Pi_U(xi) = xi - U Lambda, Lambda skew, solving the Lyapunov equation
/// (U^T U) Lambda + Lambda (U^T U) = U^T xi - xi^T U in the eigenbasis of U^T U.
TangentVector projectHorizontal(const ManifoldPoint& u, const TangentVector& xi);

/// Orthogonal projector of an ambient matrix onto the horizontal space.
TangentVector projectHorizontal(const ManifoldPoint& u, const Matrix& z);

/// R_U(step * xi) = (U + step xi) / ||U + step xi||_F.
ManifoldPoint retract(const ManifoldPoint& u, const TangentVector& xi, double step = 1.0);

/// grad f = Psi_U(euclidean gradient).
TangentVector riemannianGradient(const ManifoldPoint& u, const Matrix& eucGrad);

/// Riemannian Hessian of f along the horizontal vector xi, given the Euclidean
/// gradient at U and D grad f(U)[xi]. The result is horizontal.
TangentVector riemannianHessVec(const ManifoldPoint& u, const Matrix& eucGrad,
                                const Matrix& eucHessVec, const TangentVector& xi);

/// trace(xi^T eta); both vectors must share a base point.
double innerProduct(const TangentVector& xi, const TangentVector& eta);

/// Projection-based vector transport: horizontal projection of v's matrix at
/// the new point.
TangentVector transport(const ManifoldPoint& to, const TangentVector& v);

/// Skew matrix Lambda solving (G Lambda + Lambda G) = rhs for symmetric PSD G.
Matrix solveLyapunovSkew(const Matrix& gram, const Matrix& rhs);

}  // namespace spectra_lr
