#pragma once

// Dense primal-side quantities, meant for desk-scale checks.

#include <spectra_lr/problems.hpp>
#include <spectra_lr/types.hpp>

namespace spectra_lr {

/// Sum of singular values (dense SVD).
double nuclearNorm(const Matrix& w);

/// C * L(Y, W) + ||W||_*^2 / 2. Constraint feasibility is not folded in; see
/// ProblemAdapter::constraintViolation.
double primalObjective(const ProblemAdapter& problem, const Matrix& w);

/// |<Theta^+ W, W> - ||W||_*^2| with Theta = sqrt(W W^T) / trace(sqrt(W W^T)).
double variationalThetaCheck(const Matrix& w);

}  // namespace spectra_lr
