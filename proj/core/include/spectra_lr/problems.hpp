#pragma once

// Problem adapters: each binds one dataset and loss/constraint pairing and
// exposes g(U), its Euclidean gradient, and Hessian-vector products.

#include <spectra_lr/certificate.hpp>
#include <spectra_lr/column_sparse.hpp>
#include <spectra_lr/inner_duals.hpp>
#include <spectra_lr/spectrahedron.hpp>
#include <spectra_lr/types.hpp>

#include <memory>
#include <utility>
#include <vector>

namespace spectra_lr {

/// Adapter-private factorizations kept alongside a certificate so that
/// Hessian-vector products reuse them.
struct InnerCache {
  virtual ~InnerCache() = default;
};

struct Evaluation {
  double value = 0.0;
  DualCertificate cert;
  std::shared_ptr<const InnerCache> cache;
};

class ProblemAdapter {
 public:
  virtual ~ProblemAdapter() = default;

  virtual ProblemKind kind() const = 0;
  /// d and T of the primal matrix W.
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  const RegularizationParams& params() const { return params_; }

  /// g(U) and its maximizers. `warm` seeds iterative inner solvers.
  virtual Evaluation evaluate(const ManifoldPoint& u, const DualCertificate* warm = nullptr) const = 0;

  /// M-dot = Z-dot + A*(s-dot) along V, with the active sets of `at` frozen.
  virtual CompositeDual dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                                  const Evaluation& at) const = 0;

  Matrix euclideanGradient(const ManifoldPoint& u, const Evaluation& at) const;
  Matrix euclideanHessVec(const ManifoldPoint& u, const Matrix& v, const Evaluation& at) const;

  /// Products with the d x T data matrix used for initialization.
  virtual Matrix dataMatrixTimes(const Matrix& x) const = 0;
  virtual Matrix dataMatrixTransposeTimes(const Matrix& y) const = 0;

  /// L(Y, W) for a dense primal candidate.
  virtual double loss(const Matrix& w) const = 0;
  /// Distance of W from the structural constraint set (0 when unconstrained).
  virtual double constraintViolation(const Matrix& w) const;

 protected:
  ProblemAdapter(Index rows, Index cols, RegularizationParams params);

 private:
  Index rows_;
  Index cols_;
  RegularizationParams params_;
};

/// Square-loss matrix completion.
class CompletionProblem final : public ProblemAdapter {
 public:
  CompletionProblem(ColumnSparseMatrix data, RegularizationParams params);

  ProblemKind kind() const override { return ProblemKind::completion; }
  Evaluation evaluate(const ManifoldPoint& u, const DualCertificate* warm = nullptr) const override;
  CompositeDual dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                          const Evaluation& at) const override;
  Matrix dataMatrixTimes(const Matrix& x) const override;
  Matrix dataMatrixTransposeTimes(const Matrix& y) const override;
  double loss(const Matrix& w) const override;
  const ColumnSparseMatrix& data() const { return data_; }

 private:
  ColumnSparseMatrix data_;
  SparseMatrix sparse_;
};

/// l1 (epsilon = 0) or epsilon-insensitive loss completion.
class RobustCompletionProblem final : public ProblemAdapter {
 public:
  /// `kind` must be robustL1 or robustEpsSVR; robustL1 forces epsilon = 0.
  RobustCompletionProblem(ColumnSparseMatrix data, RegularizationParams params, ProblemKind kind);

  ProblemKind kind() const override { return kind_; }
  Evaluation evaluate(const ManifoldPoint& u, const DualCertificate* warm = nullptr) const override;
  CompositeDual dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                          const Evaluation& at) const override;
  Matrix dataMatrixTimes(const Matrix& x) const override;
  Matrix dataMatrixTransposeTimes(const Matrix& y) const override;
  double loss(const Matrix& w) const override;
  const ColumnSparseMatrix& data() const { return data_; }

 private:
  ColumnSparseMatrix data_;
  SparseMatrix sparse_;
  ProblemKind kind_;
};

/// Square-loss completion with W >= 0 elementwise.
class NonnegCompletionProblem final : public ProblemAdapter {
 public:
  NonnegCompletionProblem(ColumnSparseMatrix data, RegularizationParams params);

  ProblemKind kind() const override { return ProblemKind::nonnegCompletion; }
  Evaluation evaluate(const ManifoldPoint& u, const DualCertificate* warm = nullptr) const override;
  CompositeDual dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                          const Evaluation& at) const override;
  Matrix dataMatrixTimes(const Matrix& x) const override;
  Matrix dataMatrixTransposeTimes(const Matrix& y) const override;
  double loss(const Matrix& w) const override;
  double constraintViolation(const Matrix& w) const override;
  const ColumnSparseMatrix& data() const { return data_; }

 private:
  ColumnSparseMatrix data_;
  SparseMatrix sparse_;
};

/// Observed signal for Hankel learning; the d x T Hankel matrix of y has
/// entry (i, t) = y[i + t].
struct HankelProblemData {
  Vector yNoisy;
  Index d = 0;
  Index T = 0;
  /// True when the caller asked for d > T and the dimensions were swapped.
  bool transposed = false;

  /// Validates the length and swaps d and T when d > T.
  static HankelProblemData make(Vector y, Index d, Index T);
};

Matrix hankelMatrix(const Vector& y, Index d, Index T);

class HankelProblem final : public ProblemAdapter {
 public:
  HankelProblem(HankelProblemData data, RegularizationParams params);

  ProblemKind kind() const override { return ProblemKind::hankel; }
  Evaluation evaluate(const ManifoldPoint& u, const DualCertificate* warm = nullptr) const override;
  CompositeDual dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                          const Evaluation& at) const override;
  Matrix dataMatrixTimes(const Matrix& x) const override;
  Matrix dataMatrixTransposeTimes(const Matrix& y) const override;
  /// Square loss between y and the anti-diagonal means of W.
  double loss(const Matrix& w) const override;
  /// Frobenius distance of W from its Hankel projection.
  double constraintViolation(const Matrix& w) const override;
  const HankelProblemData& data() const { return data_; }

 private:
  HankelProblemData data_;
};

struct MTFLTask {
  Matrix X;  // n_t x d
  Vector y;  // n_t
};

struct MTFLTaskSet {
  std::vector<MTFLTask> tasks;
  Index featureDim = 0;

  Index taskCount() const { return static_cast<Index>(tasks.size()); }
  /// Throws unless every task has n_t >= 1 rows and featureDim columns.
  void validate() const;
};

class MTFLProblem final : public ProblemAdapter {
 public:
  MTFLProblem(MTFLTaskSet data, RegularizationParams params);

  ProblemKind kind() const override { return ProblemKind::mtfl; }
  Evaluation evaluate(const ManifoldPoint& u, const DualCertificate* warm = nullptr) const override;
  CompositeDual dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                          const Evaluation& at) const override;
  Matrix dataMatrixTimes(const Matrix& x) const override;
  Matrix dataMatrixTransposeTimes(const Matrix& y) const override;
  /// Sum over tasks of ||y_t - X_t w_t||^2 with w_t column t of W.
  double loss(const Matrix& w) const override;
  const MTFLTaskSet& data() const { return data_; }

 private:
  MTFLTaskSet data_;
  Matrix dataMatrix_;
};

std::unique_ptr<ProblemAdapter> makeCompletionAdapter(ProblemKind kind, ColumnSparseMatrix data,
                                                      RegularizationParams params);

Evaluation evaluateG(const ProblemAdapter& adapter, const ManifoldPoint& u,
                     const DualCertificate* warm = nullptr);

/// W entries at (row, col) queries from U and the certificate's M.
Vector predictCompletion(const ManifoldPoint& u, const DualCertificate& cert,
                         const std::vector<std::pair<Index, Index>>& queries);

/// Values of W at the positions of `pattern`, in its column-major order.
Vector predictAt(const ManifoldPoint& u, const DualCertificate& cert,
                 const ColumnSparseMatrix& pattern);

/// h_t(x) = <x, w_t> with w_t = U U^T X_t^T z_t.
double predictMTFL(const ManifoldPoint& u, const DualCertificate& cert, Index task, const Vector& x);

/// Anti-diagonal means of W = U U^T S.
Vector hankelRecoverSignal(const ManifoldPoint& u, const DualCertificate& cert);

}  // namespace spectra_lr
