#pragma once

#include <spectra_lr/types.hpp>

#include <functional>

namespace spectra_lr {

/// Worker count used by parallelFor. Initialized from SPECTRA_LR_THREADS
/// (default 1); values below 1 are clamped to 1.
int threadCount();
void setThreadCount(int n);

/// Runs body(i) for i in [0, n). Work is split into contiguous blocks; callers
/// write into per-index slots so results never depend on the schedule.
void parallelFor(Index n, const std::function<void(Index)>& body);

}  // namespace spectra_lr
