#include <spectra_lr/parallel.hpp>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spectra_lr {

namespace {

int threadsFromEnv() {
  const char* env = std::getenv("SPECTRA_LR_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || v < 1) return 1;
  return static_cast<int>(v);
}

std::atomic<int>& threadSetting() {
  static std::atomic<int> n{threadsFromEnv()};
  return n;
}

}  // namespace

int threadCount() { return threadSetting().load(); }

void setThreadCount(int n) { threadSetting().store(n < 1 ? 1 : n); }

void parallelFor(Index n, const std::function<void(Index)>& body) {
  const Index workers = std::min<Index>(threadCount(), n);
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex errorMutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    const Index begin = n * w / workers;
    const Index end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(errorMutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace spectra_lr
