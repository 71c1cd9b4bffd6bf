#pragma once

#include <spectra_lr/types.hpp>

namespace spectra_lr {

enum class MetricKind { rmse, mse, nmse };

double mse(const Vector& yTrue, const Vector& yPred);
double rmse(const Vector& yTrue, const Vector& yPred);
/// MSE divided by the population variance of yTrue. Throws on constant yTrue.
double nmse(const Vector& yTrue, const Vector& yPred);
double metric(const Vector& yTrue, const Vector& yPred, MetricKind kind);

/// Root mean square of the entries.
double rms(const Vector& v);

}  // namespace spectra_lr
