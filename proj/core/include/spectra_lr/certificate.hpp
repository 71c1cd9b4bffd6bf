#pragma once

// Dual variables of the inner maximization and the quantities derived from
// them: the duality-gap certificate and the factored primal solution.

#include <spectra_lr/spectrahedron.hpp>
#include <spectra_lr/types.hpp>

#include <variant>
#include <vector>

namespace spectra_lr {

/// The composite dual M = Z + A*(s) as a d x T operator. Sparse problems keep
/// the sparsity of the observation pattern; Hankel and multi-task keep a dense
/// block.
class CompositeDual {
 public:
  CompositeDual() : m_(Matrix()) {}
  static CompositeDual fromSparse(SparseMatrix m);
  static CompositeDual fromDense(Matrix m);

  Index rows() const;
  Index cols() const;
  bool isSparse() const { return std::holds_alternative<SparseMatrix>(m_); }

  /// M x for x of shape T x k.
  Matrix times(const Matrix& x) const;
  /// M^T y for y of shape d x k.
  Matrix transposeTimes(const Matrix& y) const;
  Matrix toDense() const;
  double squaredNorm() const;
  const SparseMatrix& sparse() const { return std::get<SparseMatrix>(m_); }
  const Matrix& dense() const { return std::get<Matrix>(m_); }

 private:
  std::variant<SparseMatrix, Matrix> m_;
};

struct SparseColumn {
  std::vector<Index> index;
  std::vector<double> value;

  bool empty() const { return index.empty(); }
};

struct InnerStatus {
  bool converged = true;
  int maxIterations = 0;
  /// Largest per-column (or global) stationarity residual at return.
  double maxResidual = 0.0;
};

struct DualCertificate {
  ProblemKind kind = ProblemKind::completion;
  /// Loss duals. Completion kinds: one vector per column, aligned with the
  /// observed indices of that column. Multi-task: z_t of length n_t.
  /// Hankel: a single vector of length d + T - 1.
  std::vector<Vector> z;
  /// Non-negativity duals, one sparse column per t (empty for other kinds).
  std::vector<SparseColumn> s;
  /// Hankel constraint duals S (d x T); empty for other kinds.
  Matrix hankelS;
  CompositeDual m;
  InnerStatus status;
};

struct PowerIterationOptions {
  int maxIterations = 500;
  double tolerance = 1e-9;
};

struct GapReport {
  double gap = 0.0;
  double sigma1 = 0.0;
  double relativeGap = 0.0;
  bool powerConverged = true;
  int powerIterations = 0;
};

/// Delta = (sigma_1(M)^2 - ||U^T M||_F^2) / 2. sigma_1 comes from power
/// iteration on M M^T from the normalized all-ones vector, bounded below by the
/// Rayleigh-Ritz value on range(U).
GapReport dualityGap(const ManifoldPoint& u, const CompositeDual& m, double gValue,
                     const PowerIterationOptions& opts = {});
GapReport dualityGap(const ManifoldPoint& u, const DualCertificate& cert, double gValue,
                     const PowerIterationOptions& opts = {});

/// W = U U^T M held as the pair (U, U^T M).
struct FactoredPrimal {
  Matrix left;
  Matrix right;

  Index rows() const { return left.rows(); }
  Index cols() const { return right.cols(); }
  Index rank() const { return left.cols(); }
  double entry(Index i, Index t) const { return left.row(i).dot(right.col(t)); }
  Matrix dense() const { return left * right; }
};

FactoredPrimal reconstructPrimal(const ManifoldPoint& u, const CompositeDual& m);
FactoredPrimal reconstructPrimal(const ManifoldPoint& u, const DualCertificate& cert);

}  // namespace spectra_lr
