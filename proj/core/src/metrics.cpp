#include <spectra_lr/metrics.hpp>

#include <cmath>

namespace spectra_lr {

namespace {

void requireSameSize(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InputError("metric: prediction and target lengths differ");
  if (a.size() == 0) throw InputError("metric: empty target vector");
}

}  // namespace

double mse(const Vector& yTrue, const Vector& yPred) {
  requireSameSize(yTrue, yPred);
  return (yTrue - yPred).squaredNorm() / static_cast<double>(yTrue.size());
}

double rmse(const Vector& yTrue, const Vector& yPred) { return std::sqrt(mse(yTrue, yPred)); }

double nmse(const Vector& yTrue, const Vector& yPred) {
  requireSameSize(yTrue, yPred);
  const double variance = (yTrue.array() - yTrue.mean()).square().mean();
  if (!(variance > 0.0)) throw InputError("nmse: target has zero variance");
  return mse(yTrue, yPred) / variance;
}

double metric(const Vector& yTrue, const Vector& yPred, MetricKind kind) {
  switch (kind) {
    case MetricKind::rmse: return rmse(yTrue, yPred);
    case MetricKind::mse: return mse(yTrue, yPred);
    case MetricKind::nmse: return nmse(yTrue, yPred);
  }
  throw InputError("metric: unknown kind");
}

double rms(const Vector& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

}  // namespace spectra_lr
