#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spectra_lr::cli {

/// Exit codes: 0 converged, 1 input error, 2 not converged (or certificate
/// above threshold), 3 internal failure.
enum ExitCode : int { kOk = 0, kInputError = 1, kNotConverged = 2, kInternalError = 3 };

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace spectra_lr::cli
