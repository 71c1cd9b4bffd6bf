#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spectra_lr {

using Scalar = double;
using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Malformed caller input: wrong shapes, bad files, out-of-range parameters.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated geometric precondition (e.g. mixing tangent vectors of different
/// base points).
class GeometryError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Which of the supported losses / structural constraints an adapter binds.
enum class ProblemKind {
  completion,
  robustL1,
  robustEpsSVR,
  nonnegCompletion,
  hankel,
  mtfl,
};

const char* toString(ProblemKind kind);

/// Cost and inner-solver controls shared by all applications.
struct RegularizationParams {
  double C = 1.0;
  double epsilon = 0.0;
  double innerTol = 1e-10;
  int innerMaxIters = 1000;

  void validate() const;
};

inline double frobeniusInner(const Matrix& a, const Matrix& b) {
  return a.cwiseProduct(b).sum();
}

}  // namespace spectra_lr
