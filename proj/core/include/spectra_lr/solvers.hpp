#pragma once

// Riemannian conjugate-gradient and trust-region minimization of g(U).

#include <spectra_lr/certificate.hpp>
#include <spectra_lr/problems.hpp>
#include <spectra_lr/spectrahedron.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace spectra_lr {

struct SolverConfig {
  int maxOuterIters = 500;
  /// Stop once ||grad g|| <= gradNormTol, measured against the first
  /// gradient norm when relativeGradTol is set.
  double gradNormTol = 1e-6;
  bool relativeGradTol = true;
  double armijoC1 = 1e-4;
  double armijoBacktrack = 0.5;
  int maxLineSearch = 25;
  double trInitialRadius = 1.0;
  double trMaxRadius = 100.0;
  /// 0 gives the Cauchy-point method.
  int tcgMaxIters = 200;
  double tcgKappa = 0.1;
  double tcgTheta = 1.0;
  /// Certify every certEvery iterations (0: only at the end).
  int certEvery = 0;
  /// Also stop at a certified iterate with relative gap <= gapTol (0: off).
  double gapTol = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double gValue = 0.0;
  double gradNorm = 0.0;
  double stepSize = 0.0;
  double elapsedSeconds = 0.0;
  std::optional<double> dualityGap;
};

enum class SolveStatus { converged, stalled, maxIterations };
const char* toString(SolveStatus status);

struct SolveResult {
  ManifoldPoint u;
  Evaluation eval;
  std::vector<IterationRecord> trace;
  SolveStatus status = SolveStatus::maxIterations;
  int iterations = 0;
  double gradNorm = 0.0;
  GapReport gap;
};

/// Optional per-iteration observer.
using IterationCallback = std::function<void(const IterationRecord&)>;

SolveResult solveCG(const ProblemAdapter& problem, const ManifoldPoint& u0, const SolverConfig& cfg,
                    const IterationCallback& onIter = {});
SolveResult solveTR(const ProblemAdapter& problem, const ManifoldPoint& u0, const SolverConfig& cfg,
                    const IterationCallback& onIter = {});

/// Leading r left singular vectors of the problem's data matrix scaled to
/// unit Frobenius norm, with each column's largest-magnitude entry made
/// positive. Zero data falls back to a seeded Gaussian point.
ManifoldPoint initializePoint(const ProblemAdapter& problem, Index d, Index r, std::uint64_t seed);

}  // namespace spectra_lr
