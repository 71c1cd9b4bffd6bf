#include <spectra_lr/version.hpp>

#ifndef SPECTRA_LR_GIT_DESCRIBE
#define SPECTRA_LR_GIT_DESCRIBE "unknown"
#endif

namespace spectra_lr {

const char* versionString() { return "0.1.0"; }
const char* gitDescribe() { return SPECTRA_LR_GIT_DESCRIBE; }

}  // namespace spectra_lr
