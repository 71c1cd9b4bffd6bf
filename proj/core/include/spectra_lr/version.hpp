#pragma once

namespace spectra_lr {

/// Library version, e.g. "0.1.0".
const char* versionString();
/// `git describe` of the source tree at configure time ("unknown" outside git).
const char* gitDescribe();

}  // namespace spectra_lr
