#include <spectra_lr/datasets.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace spectra_lr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> tokenize(std::string line) {
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

bool parseIndex(const std::string& s, long long& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parseDouble(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && std::isfinite(out);
}

[[noreturn]] void lineError(std::size_t line, const std::string& msg) {
  std::ostringstream os;
  os << "line " << line << ": " << msg;
  throw InputError(os.str());
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

ColumnSparseMatrix parseTriplets(const std::string& text, std::optional<Index> rows,
                                 std::optional<Index> cols) {
  struct Entry {
    long long row, col;
    double value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::optional<long long> hd, ht, hnnz;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineNo = 0;
  bool seenContent = false;
  while (std::getline(in, raw)) {
    ++lineNo;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.rfind("%%", 0) == 0 && !seenContent && !hd) {
      const auto tok = tokenize(line.substr(2));
      long long a, b, c;
      if (tok.size() != 3 || !parseIndex(tok[0], a) || !parseIndex(tok[1], b) ||
          !parseIndex(tok[2], c) || a < 0 || b < 0 || c < 0) {
        lineError(lineNo, "malformed header, expected '%%d T nnz'");
      }
      hd = a;
      ht = b;
      hnnz = c;
      continue;
    }
    if (line[0] == '%' || line[0] == '#') continue;
    seenContent = true;
    const auto tok = tokenize(line);
    if (tok.size() != 3) lineError(lineNo, "expected 'row col value', got " + std::to_string(tok.size()) + " fields");
    Entry e{0, 0, 0.0, lineNo};
    if (!parseIndex(tok[0], e.row)) lineError(lineNo, "non-numeric row index '" + tok[0] + "'");
    if (!parseIndex(tok[1], e.col)) lineError(lineNo, "non-numeric column index '" + tok[1] + "'");
    if (!parseDouble(tok[2], e.value)) lineError(lineNo, "non-numeric value '" + tok[2] + "'");
    if (e.row < 1 || e.col < 1) lineError(lineNo, "indices are 1-based and must be positive");
    entries.push_back(e);
  }

  long long maxRow = 0, maxCol = 0;
  for (const Entry& e : entries) {
    maxRow = std::max(maxRow, e.row);
    maxCol = std::max(maxCol, e.col);
  }
  const long long d = rows ? *rows : (hd ? *hd : maxRow);
  const long long T = cols ? *cols : (ht ? *ht : maxCol);
  if (hnnz && static_cast<std::size_t>(*hnnz) != entries.size()) {
    std::ostringstream os;
    os << "header declares " << *hnnz << " entries but the file has " << entries.size();
    throw InputError(os.str());
  }

  std::unordered_map<long long, std::size_t> seen;
  seen.reserve(entries.size());
  std::vector<Triplet> triplets;
  triplets.reserve(entries.size());
  for (const Entry& e : entries) {
    if (e.row > d || e.col > T) {
      std::ostringstream os;
      os << "entry (" << e.row << ", " << e.col << ") outside the " << d << "x" << T << " matrix";
      lineError(e.line, os.str());
    }
    const long long key = (e.col - 1) * d + (e.row - 1);
    auto [it, inserted] = seen.emplace(key, e.line);
    if (!inserted) {
      std::ostringstream os;
      os << "duplicate entry (" << e.row << ", " << e.col << "), first seen on line " << it->second;
      lineError(e.line, os.str());
    }
    triplets.push_back({static_cast<Index>(e.row - 1), static_cast<Index>(e.col - 1), e.value});
  }
  return ColumnSparseMatrix::fromTriplets(static_cast<Index>(d), static_cast<Index>(T),
                                          std::move(triplets));
}

ColumnSparseMatrix loadTriplets(const std::string& path, std::optional<Index> rows,
                                std::optional<Index> cols) {
  try {
    return parseTriplets(readFile(path), rows, cols);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void saveTriplets(const std::string& path, const ColumnSparseMatrix& m) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw InputError("cannot write file '" + path + "'");
  std::fprintf(f, "%%%%%lld %lld %lld\n", static_cast<long long>(m.rows()),
               static_cast<long long>(m.cols()), static_cast<long long>(m.nonZeros()));
  for (Index t = 0; t < m.cols(); ++t) {
    auto idx = m.columnIndices(t);
    auto val = m.columnValues(t);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::fprintf(f, "%lld %lld %.17g\n", static_cast<long long>(idx[k] + 1),
                   static_cast<long long>(t + 1), val[k]);
    }
  }
  if (std::fclose(f) != 0) throw InputError("error while writing '" + path + "'");
}

namespace {

Matrix gaussianMatrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

/// First `count` entries of a uniformly random permutation of [0, n).
std::vector<long long> sampleWithoutReplacement(std::mt19937_64& rng, long long n, long long count) {
  std::vector<long long> out;
  out.reserve(static_cast<std::size_t>(count));
  if (n <= 50'000'000) {
    std::vector<long long> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0LL);
    for (long long k = 0; k < count; ++k) {
      std::uniform_int_distribution<long long> pick(k, n - 1);
      std::swap(perm[k], perm[pick(rng)]);
      out.push_back(perm[k]);
    }
    return out;
  }
  std::unordered_set<long long> taken;
  std::uniform_int_distribution<long long> pick(0, n - 1);
  while (static_cast<long long>(out.size()) < count) {
    const long long v = pick(rng);
    if (taken.insert(v).second) out.push_back(v);
  }
  return out;
}

}  // namespace

SynthCompletion synthCompletion(const CompletionSynthSpec& spec, std::uint64_t seed) {
  if (spec.d < 1 || spec.T < 1 || spec.r < 1) throw InputError("synthetic completion needs d, T, r >= 1");
  if (!(spec.sampleFraction > 0.0 && spec.sampleFraction <= 1.0)) {
    throw InputError("sample fraction must lie in (0, 1]");
  }
  if (!(spec.noiseSigma >= 0.0) || !(spec.outlierFraction >= 0.0 && spec.outlierFraction <= 1.0)) {
    throw InputError("noise level and outlier fraction must be non-negative");
  }
  std::mt19937_64 rng(seed);
  SynthCompletion out;
  out.left = gaussianMatrix(rng, spec.d, spec.r);
  out.right = gaussianMatrix(rng, spec.T, spec.r);
  if (spec.nonnegative) {
    out.left = out.left.cwiseAbs();
    out.right = out.right.cwiseAbs();
  }
  const long long total = static_cast<long long>(spec.d) * spec.T;
  const long long nTrain =
      std::max<long long>(1, std::llround(spec.sampleFraction * static_cast<double>(total)));
  const long long nTest = std::min(nTrain, total - nTrain);
  const auto picks = sampleWithoutReplacement(rng, total, nTrain + nTest);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Triplet> train, test;
  train.reserve(static_cast<std::size_t>(nTrain));
  test.reserve(static_cast<std::size_t>(nTest));
  for (long long k = 0; k < nTrain + nTest; ++k) {
    const Index i = static_cast<Index>(picks[k] % spec.d);
    const Index t = static_cast<Index>(picks[k] / spec.d);
    const double v = out.truth(i, t);
    if (k < nTrain) {
      train.push_back({i, t, v + (spec.noiseSigma > 0.0 ? spec.noiseSigma * normal(rng) : 0.0)});
    } else {
      test.push_back({i, t, v});
    }
  }
  if (spec.outlierFraction > 0.0) {
    double ss = 0.0;
    for (const Triplet& e : train) ss += e.value * e.value;
    const double level = spec.outlierScale * std::sqrt(ss / static_cast<double>(train.size()));
    const long long nOut = std::llround(spec.outlierFraction * static_cast<double>(train.size()));
    const auto which = sampleWithoutReplacement(rng, static_cast<long long>(train.size()), nOut);
    std::bernoulli_distribution coin(0.5);
    for (long long k : which) train[k].value += (coin(rng) ? level : -level);
  }
  out.underdetermined = nTrain < spec.r * (spec.d + spec.T - spec.r);
  out.train = ColumnSparseMatrix::fromTriplets(spec.d, spec.T, std::move(train));
  out.test = ColumnSparseMatrix::fromTriplets(spec.d, spec.T, std::move(test));
  return out;
}

SynthHankel synthHankel(const LTISystemSpec& spec, std::uint64_t seed) {
  if (spec.order < 1 || spec.d < 1 || spec.T < 1) throw InputError("LTI spec needs order, d, T >= 1");
  if (!(spec.spectralRadiusCap > 0.0 && spec.spectralRadiusCap < 1.0)) {
    throw InputError("spectral radius cap must lie in (0, 1)");
  }
  if (!(spec.noiseSigma >= 0.0)) throw InputError("noise sigma must be non-negative");
  const Index len = spec.d + spec.T - 1;
  const Index r0 = spec.order;
  std::mt19937_64 rng(seed);
  SynthHankel out;
  constexpr int kMaxAttempts = 11;
  for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
    Matrix a = gaussianMatrix(rng, r0, r0);
    Eigen::EigenSolver<Matrix> es(a, false);
    const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
    a *= spec.spectralRadiusCap / radius;
    const Vector b = gaussianMatrix(rng, r0, 1).col(0);
    const Vector c = gaussianMatrix(rng, r0, 1).col(0);
    Vector y(len);
    Vector state = a * b;
    for (Index k = 0; k < len; ++k) {
      y(k) = c.dot(state);
      state = a * state;
    }
    out.yTrue = y;
    out.attempts = attempt;
    const Index minDim = std::min(spec.d, spec.T);
    if (r0 >= minDim) {
      out.rankCheckPassed = true;
      break;
    }
    Eigen::JacobiSVD<Matrix> svd(hankelMatrix(y, spec.d, spec.T));
    const Vector& sv = svd.singularValues();
    out.rankCheckPassed = sv(r0 - 1) >= 1e6 * sv(r0);
    if (out.rankCheckPassed) break;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  out.yNoisy = out.yTrue;
  if (spec.noiseSigma > 0.0) {
    for (Index k = 0; k < len; ++k) out.yNoisy(k) += spec.noiseSigma * normal(rng);
  }
  return out;
}

std::vector<TrainTest> split(const ColumnSparseMatrix& data, const SplitSpec& spec) {
  if (!(spec.trainFraction > 0.0 && spec.trainFraction < 1.0)) {
    throw InputError("train fraction must lie in (0, 1)");
  }
  if (spec.folds < 1) throw InputError("fold count must be at least 1");
  const auto all = data.triplets();
  const long long n = static_cast<long long>(all.size());
  const long long nTrain = std::llround(spec.trainFraction * static_cast<double>(n));
  std::mt19937_64 rng(spec.seed);
  std::vector<TrainTest> out;
  for (int f = 0; f < spec.folds; ++f) {
    const auto perm = sampleWithoutReplacement(rng, n, n);
    std::vector<Triplet> train, test;
    for (long long k = 0; k < n; ++k) (k < nTrain ? train : test).push_back(all[perm[k]]);
    out.push_back({ColumnSparseMatrix::fromTriplets(data.rows(), data.cols(), std::move(train)),
                   ColumnSparseMatrix::fromTriplets(data.rows(), data.cols(), std::move(test))});
  }
  return out;
}

MTFLTaskSet loadMTFLCsv(const std::string& path) {
  std::istringstream in(readFile(path));
  std::string raw;
  std::size_t lineNo = 0;
  std::map<long long, std::vector<std::pair<double, std::vector<double>>>> rows;
  long long featureDim = -1;
  bool first = true;
  try {
    while (std::getline(in, raw)) {
      ++lineNo;
      const std::string line = trim(raw);
      if (line.empty() || line[0] == '#') continue;
      const auto tok = tokenize(line);
      long long task;
      if (first && !tok.empty() && !parseIndex(tok[0], task)) {
        first = false;
        continue;  // header
      }
      first = false;
      if (tok.size() < 3) lineError(lineNo, "expected 'task,y,x1,...,xd'");
      if (!parseIndex(tok[0], task) || task < 0) lineError(lineNo, "task id must be a non-negative integer");
      double y;
      if (!parseDouble(tok[1], y)) lineError(lineNo, "non-numeric target '" + tok[1] + "'");
      std::vector<double> x(tok.size() - 2);
      for (std::size_t j = 2; j < tok.size(); ++j) {
        if (!parseDouble(tok[j], x[j - 2])) lineError(lineNo, "non-numeric feature '" + tok[j] + "'");
      }
      if (featureDim < 0) featureDim = static_cast<long long>(x.size());
      if (static_cast<long long>(x.size()) != featureDim) {
        lineError(lineNo, "feature count differs from earlier lines");
      }
      rows[task].emplace_back(y, std::move(x));
    }
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
  if (rows.empty()) throw InputError(path + ": no samples");
  MTFLTaskSet set;
  set.featureDim = featureDim;
  const long long nTasks = rows.rbegin()->first + 1;
  set.tasks.resize(static_cast<std::size_t>(nTasks));
  for (auto& [t, samples] : rows) {
    MTFLTask& task = set.tasks[t];
    task.X.resize(static_cast<Index>(samples.size()), featureDim);
    task.y.resize(static_cast<Index>(samples.size()));
    for (std::size_t k = 0; k < samples.size(); ++k) {
      task.y(static_cast<Index>(k)) = samples[k].first;
      for (long long j = 0; j < featureDim; ++j) task.X(static_cast<Index>(k), j) = samples[k].second[j];
    }
  }
  try {
    set.validate();
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
  return set;
}

void saveMTFLCsv(const std::string& path, const MTFLTaskSet& data) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw InputError("cannot write file '" + path + "'");
  std::fprintf(f, "task,y");
  for (Index j = 0; j < data.featureDim; ++j) std::fprintf(f, ",x%lld", static_cast<long long>(j + 1));
  std::fprintf(f, "\n");
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    const MTFLTask& task = data.tasks[t];
    for (Index k = 0; k < task.X.rows(); ++k) {
      std::fprintf(f, "%zu,%.17g", t, task.y(k));
      for (Index j = 0; j < task.X.cols(); ++j) std::fprintf(f, ",%.17g", task.X(k, j));
      std::fprintf(f, "\n");
    }
  }
  if (std::fclose(f) != 0) throw InputError("error while writing '" + path + "'");
}

SynthMTFL synthMTFL(const MTFLSynthSpec& spec, std::uint64_t seed) {
  if (spec.d < 1 || spec.tasks < 1 || spec.samplesPerTask < 1 || spec.r < 1) {
    throw InputError("synthetic multi-task spec needs positive sizes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SynthMTFL out;
  const Matrix p = gaussianMatrix(rng, spec.d, spec.r) / std::sqrt(static_cast<double>(spec.d));
  out.weights = p * gaussianMatrix(rng, spec.r, spec.tasks);
  out.train.featureDim = out.test.featureDim = spec.d;
  for (Index t = 0; t < spec.tasks; ++t) {
    for (MTFLTaskSet* set : {&out.train, &out.test}) {
      MTFLTask task;
      task.X = gaussianMatrix(rng, spec.samplesPerTask, spec.d);
      task.y = task.X * out.weights.col(t);
      for (Index k = 0; k < task.y.size(); ++k) task.y(k) += spec.noiseSigma * normal(rng);
      set->tasks.push_back(std::move(task));
    }
  }
  return out;
}

FeatureScaler FeatureScaler::fit(const MTFLTaskSet& fitOn) {
  FeatureScaler s;
  s.mean = Vector::Zero(fitOn.featureDim);
  Vector sq = Vector::Zero(fitOn.featureDim);
  double n = 0.0;
  for (const MTFLTask& t : fitOn.tasks) {
    s.mean += t.X.colwise().sum().transpose();
    sq += t.X.array().square().matrix().colwise().sum().transpose();
    n += static_cast<double>(t.X.rows());
  }
  if (n == 0.0) throw InputError("cannot fit a feature scaler on empty data");
  s.mean /= n;
  s.scale = (sq / n - s.mean.cwiseProduct(s.mean)).cwiseMax(0.0).cwiseSqrt();
  for (Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
  }
  return s;
}

void FeatureScaler::apply(MTFLTaskSet& data) const {
  for (MTFLTask& t : data.tasks) {
    t.X = (t.X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
}

Vector loadSignal(const std::string& path) {
  const std::string text = readFile(path);
  std::vector<double> values;
  std::istringstream is(text);
  std::string line;
  std::size_t lineNo = 0;
  try {
    while (std::getline(is, line)) {
      ++lineNo;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '%' || t[0] == '#') continue;
      for (const std::string& tok : tokenize(t)) {
        double v = 0.0;
        if (!parseDouble(tok, v)) lineError(lineNo, "non-numeric value '" + tok + "'");
        values.push_back(v);
      }
    }
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

void saveSignal(const std::string& path, const Vector& y) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw InputError("cannot write file '" + path + "'");
  for (Index k = 0; k < y.size(); ++k) std::fprintf(f, "%.17g\n", y(k));
  if (std::fclose(f) != 0) throw InputError("error while writing '" + path + "'");
}

}  // namespace spectra_lr
