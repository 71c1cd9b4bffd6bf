#pragma once

// Loaders, synthetic generators, and train/test splitting.

#include <spectra_lr/column_sparse.hpp>
#include <spectra_lr/problems.hpp>
#include <spectra_lr/types.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spectra_lr {

/// Reads "row col value" lines (1-based, whitespace or comma separated).
/// Lines starting with '%' or '#' are skipped except an optional leading
/// "%%d T nnz" header. Without a header, d and T default to the largest
/// indices seen unless `rows`/`cols` are given.
ColumnSparseMatrix loadTriplets(const std::string& path, std::optional<Index> rows = std::nullopt,
                                std::optional<Index> cols = std::nullopt);
/// Writes the header line followed by one triplet per entry, 17 significant
/// digits.
void saveTriplets(const std::string& path, const ColumnSparseMatrix& m);
ColumnSparseMatrix parseTriplets(const std::string& text, std::optional<Index> rows = std::nullopt,
                                 std::optional<Index> cols = std::nullopt);

struct CompletionSynthSpec {
  Index d = 100;
  Index T = 200;
  Index r = 5;
  double sampleFraction = 0.25;
  double noiseSigma = 0.0;
  /// Fraction of training entries replaced by gross outliers.
  double outlierFraction = 0.0;
  /// Outlier value = outlierScale * (data RMS) * (random sign).
  double outlierScale = 10.0;
  /// Draw factors as |N(0,1)| so the ground truth is non-negative.
  bool nonnegative = false;
};

struct SynthCompletion {
  ColumnSparseMatrix train;
  ColumnSparseMatrix test;
  /// Y = left * right^T.
  Matrix left;
  Matrix right;
  /// |Omega| below the dof count r(d + T - r).
  bool underdetermined = false;

  double truth(Index i, Index t) const { return left.row(i).dot(right.row(t)); }
};

/// Y = L R^T with standard-normal factors; a training sample of
/// round(frac * d * T) entries without replacement and a disjoint test sample
/// of the same size (capped by what remains).
SynthCompletion synthCompletion(const CompletionSynthSpec& spec, std::uint64_t seed);

struct LTISystemSpec {
  Index order = 5;
  double spectralRadiusCap = 0.9;
  double noiseSigma = 0.05;
  Index d = 100;
  Index T = 100;
};

struct SynthHankel {
  Vector yTrue;
  Vector yNoisy;
  /// Draws needed before the rank check passed (1 = first draw).
  int attempts = 1;
  bool rankCheckPassed = true;
};

/// Impulse response y_k = c^T A^k b, k = 1 .. d + T - 1, of a random
/// stable system, plus Gaussian noise of level sigma.
SynthHankel synthHankel(const LTISystemSpec& spec, std::uint64_t seed);

struct SplitSpec {
  double trainFraction = 0.8;
  std::uint64_t seed = 0;
  int folds = 1;
};

struct TrainTest {
  ColumnSparseMatrix train;
  ColumnSparseMatrix test;
};

/// Independent uniform random splits of the observed entries.
std::vector<TrainTest> split(const ColumnSparseMatrix& data, const SplitSpec& spec);

/// One value per line (or any whitespace/comma separation); '%' and '#'
/// lines are comments.
Vector loadSignal(const std::string& path);
void saveSignal(const std::string& path, const Vector& y);

/// Multi-task CSV: "task,y,x1,...,xd" per line (task 0-based), optional header
/// line starting with a non-numeric field.
MTFLTaskSet loadMTFLCsv(const std::string& path);
void saveMTFLCsv(const std::string& path, const MTFLTaskSet& data);

struct MTFLSynthSpec {
  Index d = 20;
  Index tasks = 10;
  Index samplesPerTask = 30;
  Index r = 3;
  double noiseSigma = 0.1;
};

struct SynthMTFL {
  MTFLTaskSet train;
  MTFLTaskSet test;
  /// True task weights, d x T.
  Matrix weights;
};

/// Task weights w_t = P a_t share an r-dimensional subspace; features N(0,1).
SynthMTFL synthMTFL(const MTFLSynthSpec& spec, std::uint64_t seed);

/// Per-feature z-scoring with statistics pooled over the tasks of `fitOn`.
struct FeatureScaler {
  Vector mean;
  Vector scale;
  static FeatureScaler fit(const MTFLTaskSet& fitOn);
  void apply(MTFLTaskSet& data) const;
};

}  // namespace spectra_lr
