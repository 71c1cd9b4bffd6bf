#include <doctest.h>

#include <spectra_lr/metrics.hpp>
#include <spectra_lr/primal.hpp>
#include <spectra_lr/problems.hpp>

#include "../support/oracles.hpp"

#include <cmath>
#include <random>

using namespace spectra_lr;
using namespace spectra_lr::testing;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

/// <Theta^+ W, W> with Theta = sqrt(W W^T) / trace(sqrt(W W^T)), built from an
/// eigendecomposition of W W^T and a complete orthogonal decomposition.
double thetaInner(const Matrix& w) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(w * w.transpose());
  Vector lam = eig.eigenvalues();
  const double top = lam.cwiseAbs().maxCoeff();
  for (Index i = 0; i < lam.size(); ++i) lam(i) = lam(i) > 1e-12 * top ? std::sqrt(lam(i)) : 0.0;
  const Matrix root = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
  const Matrix theta = root / root.trace();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(theta);
  cod.setThreshold(1e-10);
  return frobeniusInner(cod.pseudoInverse() * w, w);
}

}  // namespace

TEST_CASE("error metrics by hand") {
  const Vector truth = vec({1.0, 2.0, 3.0, 4.0});
  const Vector pred = vec({1.0, 0.0, 3.0, 5.0});
  CHECK(mse(truth, pred) == doctest::Approx(5.0 / 4.0));
  CHECK(rmse(truth, pred) == doctest::Approx(std::sqrt(1.25)));
  // Population variance of (1, 2, 3, 4) is 1.25.
  CHECK(nmse(truth, pred) == doctest::Approx(1.0));
  CHECK(metric(truth, pred, MetricKind::mse) == mse(truth, pred));
  CHECK(metric(truth, truth, MetricKind::rmse) == 0.0);
  CHECK(nmse(truth, Vector::Constant(4, truth.mean())) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rms(vec({3.0, -4.0})) == doctest::Approx(std::sqrt(12.5)));
  CHECK(rms(Vector()) == 0.0);
  CHECK_THROWS_AS(mse(truth, vec({1.0})), InputError);
  CHECK_THROWS_AS(nmse(Vector::Ones(3), Vector::Zero(3)), InputError);
  CHECK_THROWS_AS(rmse(Vector(), Vector()), InputError);
}

TEST_CASE("nuclear norm") {
  CHECK(nuclearNorm(Matrix::Identity(3, 3)) == doctest::Approx(3.0));
  Matrix diag = Matrix::Zero(3, 2);
  diag(0, 0) = -2.0;
  diag(2, 1) = 0.5;
  CHECK(nuclearNorm(diag) == doctest::Approx(2.5));
  CHECK(nuclearNorm(Matrix(0, 0)) == 0.0);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const Matrix w = gaussian(rng, 2 + k % 5, 1 + k % 4);
    CHECK(nuclearNorm(w) == doctest::Approx(nuclearNormByEig(w)).epsilon(1e-10));
  }
}

TEST_CASE("variational form of the squared nuclear norm") {
  SUBCASE("identity") {
    const Matrix w = Matrix::Identity(2, 2);
    // Theta = I/2, so <Theta^+ W, W> = 4 = ||W||_*^2.
    CHECK(thetaInner(w) == doctest::Approx(4.0));
    CHECK(variationalThetaCheck(w) <= 1e-12);
  }

  SUBCASE("rank one uses the pseudo-inverse") {
    std::mt19937_64 rng(2);
    const Matrix w = gaussian(rng, 5, 1) * gaussian(rng, 1, 4);
    const double nn = nuclearNormByEig(w);
    CHECK(thetaInner(w) == doctest::Approx(nn * nn).epsilon(1e-8));
    CHECK(variationalThetaCheck(w) <= 1e-10 * nn * nn);
  }

  SUBCASE("random matrices") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 30; ++k) {
      const Index d = 2 + k % 6;
      const Index t = 1 + (k * 7) % 5;
      const Matrix w = gaussian(rng, d, t);
      const double nn = nuclearNormByEig(w);
      CHECK(thetaInner(w) == doctest::Approx(nn * nn).epsilon(1e-8));
      CHECK(variationalThetaCheck(w) <= 1e-10 * std::max(1.0, nn * nn));
    }
  }

  SUBCASE("zero matrix") { CHECK(variationalThetaCheck(Matrix::Zero(3, 2)) == 0.0); }
}

TEST_CASE("primal objective") {
  RegularizationParams p;
  p.C = 3.0;
  const ColumnSparseMatrix data = ColumnSparseMatrix::fromTriplets(2, 2, {{0, 0, 2.0}});
  const CompletionProblem problem(data, p);
  Matrix w = Matrix::Zero(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  // C (2 - 1)^2 + ||W||_*^2 / 2.
  CHECK(primalObjective(problem, w) == doctest::Approx(3.0 + 2.0));
  CHECK(primalObjective(problem, Matrix::Zero(2, 2)) == doctest::Approx(12.0));
}
