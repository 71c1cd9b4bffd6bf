#pragma once

// Inner concave maximizations defining g(U), one solver per loss /
// constraint pairing. Every solver is a pure function of its inputs.
//
// Notation: for one column t, B = U_{Omega_t} (or X_t U for multi-task) is the
// |Omega_t| x r block of rows, y the observed values, and
//   K = I_r / (2C) + B^T B,
// the r x r Woodbury kernel shared by all square-loss variants.

#include <spectra_lr/certificate.hpp>
#include <spectra_lr/types.hpp>

#include <Eigen/Cholesky>

#include <span>

namespace spectra_lr {

/// Rows of `u` listed in `index`, in order.
Matrix gatherRows(const Matrix& u, std::span<const Index> index);

/// Square-loss column solution: z = (I/(2C) + B B^T)^{-1} y.
struct SquareLossColumn {
  Vector z;
  /// v = B^T z, the column of U^T M.
  Vector v;
  Eigen::LLT<Matrix> kernel;
  double value = 0.0;
  /// ||y - z/(2C) - B B^T z||.
  double residual = 0.0;
};

/// max_z <y,z> - ||z||^2/(4C) - ||B^T z||^2 / 2 through the r x r system
/// K v = B^T y, z = 2C (y - B v).
SquareLossColumn solveInnerSquareLoss(const Matrix& basis, const Vector& y, double C);

/// Same, gathering B = U_{Omega} from the full factor.
SquareLossColumn solveInnerSquareLoss(const Matrix& u, std::span<const Index> index,
                                      const Vector& y, const RegularizationParams& params);

/// Multi-task column: B = X_t U.
SquareLossColumn solveInnerMTFL(const Matrix& u, const Matrix& features, const Vector& y,
                                const RegularizationParams& params);

/// Directional derivative of the square-loss column solution when B moves
/// along `basisDot`: returns z-dot.
Vector squareLossDerivative(const Matrix& basis, const Matrix& basisDot,
                            const SquareLossColumn& col, double C);

/// Box-constrained column solution for the l1 and epsilon-insensitive losses.
struct BoxColumn {
  Vector z;
  Vector v;
  double value = 0.0;
  int sweeps = 0;
  double lastChange = 0.0;
  bool converged = false;
};

/// Coordinate ascent on max_{z in [-C,C]^n} <y,z> - eps ||z||_1 - ||B^T z||^2/2,
/// sweeping coordinates in ascending order. Stops when the largest coordinate
/// change of a sweep is at most innerTol * max(1, C).
BoxColumn solveInnerBoxQP(const Matrix& basis, const Vector& y, double C, double epsilon,
                          double tol, int maxSweeps, const Vector* warm = nullptr);

BoxColumn solveInnerL1(const Matrix& u, std::span<const Index> index, const Vector& y,
                       const RegularizationParams& params, const Vector* warm = nullptr);
BoxColumn solveInnerEpsSVR(const Matrix& u, std::span<const Index> index, const Vector& y,
                           const RegularizationParams& params, const Vector* warm = nullptr);

/// Active-set-frozen derivative: coordinates strictly inside (-C, C) (and
/// nonzero when epsilon > 0) move, the rest stay fixed.
Vector boxDerivative(const Matrix& basis, const Matrix& basisDot, const BoxColumn& col,
                     double C, double epsilon);

/// Non-negative completion column: dual pair (z_t, s_t) with s_t >= 0.
struct NonnegColumn {
  Vector z;
  /// Dense length-d multiplier; zero entries form the active set.
  Vector s;
  /// v = B^T z + U^T s, the column of U^T M.
  Vector v;
  Eigen::LLT<Matrix> kernel;
  double value = 0.0;
  /// ||min(s, w)||_inf with w = U v the primal column.
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Projected Barzilai-Borwein ascent on s >= 0 with z eliminated in closed
/// form; falls back to the 1/L step whenever the BB step fails to increase
/// the objective, so iterates are monotone.
NonnegColumn solveInnerNonneg(const Matrix& u, std::span<const Index> index, const Vector& y,
                              const RegularizationParams& params, const Vector* warmS = nullptr);

/// Derivative (z-dot, s-dot) with the zero set of s frozen.
struct NonnegDerivative {
  Vector zDot;
  Vector sDot;
};
NonnegDerivative nonnegDerivative(const Matrix& u, const Matrix& v, std::span<const Index> index,
                                  const NonnegColumn& col, double C);

/// Sum over each anti-diagonal k = i + t of a d x T matrix (length d + T - 1).
Vector antiDiagonalSums(const Matrix& s);
/// Adjoint of antiDiagonalSums: places v(k) on every cell with i + t = k.
Matrix spreadAntiDiagonals(const Vector& v, Index rows, Index cols);
/// Mean of each anti-diagonal.
Vector antiDiagonalMeans(const Matrix& w);

struct HankelSolution {
  Vector z;
  Matrix S;
  double value = 0.0;
  int iterations = 0;
  /// ||grad q(S)||_F.
  double residual = 0.0;
  bool converged = false;
};

/// max_S <A(S), y> - ||A(S)||^2/(4C) - ||U^T S||_F^2/2 with A = antiDiagonalSums,
/// by linear conjugate gradient on the normal equations
///   spread(A(S))/(2C) + U U^T S = spread(y).
/// Stops when ||grad q||_F <= innerTol * ||y||; restarts once on stagnation.
HankelSolution solveInnerHankel(const Matrix& u, const Vector& y, Index rows, Index cols,
                                const RegularizationParams& params, const Matrix* warmS = nullptr);

/// S-dot solving spread(A(S-dot))/(2C) + U U^T S-dot = -(V U^T + U V^T) S.
Matrix hankelDerivative(const Matrix& u, const Matrix& v, const Matrix& s,
                        const RegularizationParams& params, int* iterations = nullptr);

/// grad g(U) = -M M^T U.
Matrix eucGradient(const ManifoldPoint& u, const CompositeDual& m);
Matrix eucGradient(const ManifoldPoint& u, const DualCertificate& cert);

/// D grad g(U)[V] = -(Mdot M^T U + M Mdot^T U + M M^T V).
Matrix assembleHessVec(const ManifoldPoint& u, const Matrix& v, const CompositeDual& m,
                       const CompositeDual& mDot);

}  // namespace spectra_lr
