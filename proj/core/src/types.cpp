#include <spectra_lr/types.hpp>

#include <cmath>
#include <sstream>

namespace spectra_lr {

const char* toString(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::completion: return "completion";
    case ProblemKind::robustL1: return "robust-l1";
    case ProblemKind::robustEpsSVR: return "robust-eps-svr";
    case ProblemKind::nonnegCompletion: return "nonneg-completion";
    case ProblemKind::hankel: return "hankel";
    case ProblemKind::mtfl: return "mtfl";
  }
  return "unknown";
}

void RegularizationParams::validate() const {
  std::ostringstream os;
  if (!(C > 0.0) || !std::isfinite(C)) {
    os << "C must be positive and finite, got " << C;
  } else if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    os << "epsilon must be non-negative, got " << epsilon;
  } else if (!(innerTol > 0.0)) {
    os << "inner tolerance must be positive, got " << innerTol;
  } else if (innerMaxIters < 1) {
    os << "inner iteration cap must be at least 1, got " << innerMaxIters;
  } else {
    return;
  }
  throw InputError(os.str());
}

}  // namespace spectra_lr
