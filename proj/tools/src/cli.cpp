#include <spectra_lr_cli/cli.hpp>

#include <spectra_lr/certificate.hpp>
#include <spectra_lr/datasets.hpp>
#include <spectra_lr/metrics.hpp>
#include <spectra_lr/parallel.hpp>
#include <spectra_lr/problems.hpp>
#include <spectra_lr/solvers.hpp>
#include <spectra_lr/version.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace spectra_lr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Error raised while validating flags; the message already names the flag.
struct FlagError : InputError {
  using InputError::InputError;
};

[[noreturn]] void flagError(const std::string& flag, const std::string& value, const std::string& why) {
  throw FlagError(flag + ": invalid value '" + value + "' (" + why + ")");
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parseDouble(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && std::isfinite(out);
}

bool parseLong(const std::string& s, long long& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

/// "k1=v1,k2=v2" with a fixed key set.
class KeyValueSpec {
 public:
  KeyValueSpec(std::string flag, const std::string& text, const std::vector<std::string>& allowed)
      : flag_(std::move(flag)) {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0) flagError(flag_, item, "expected key=value");
      const std::string key = item.substr(0, eq);
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        std::string keys;
        for (const auto& k : allowed) keys += (keys.empty() ? "" : ", ") + k;
        flagError(flag_, item, "unknown key '" + key + "'; known keys: " + keys);
      }
      if (values_.count(key) != 0) flagError(flag_, item, "key '" + key + "' given twice");
      values_[key] = item.substr(eq + 1);
    }
  }

  Index index(const std::string& key, Index fallback, Index minimum = 1) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    if (!parseLong(it->second, v)) flagError(flag_, key + "=" + it->second, "expected an integer");
    if (v < minimum) {
      flagError(flag_, key + "=" + it->second, "must be >= " + std::to_string(minimum));
    }
    return static_cast<Index>(v);
  }

  double real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    if (!parseDouble(it->second, v)) flagError(flag_, key + "=" + it->second, "expected a number");
    return v;
  }

  bool flag(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true") return true;
    if (it->second == "0" || it->second == "false") return false;
    flagError(flag_, key + "=" + it->second, "expected 0 or 1");
  }

 private:
  std::string flag_;
  std::map<std::string, std::string> values_;
};

/// Calls `f`, re-labeling library InputErrors with the flag they came from.
template <class F>
auto withFlag(const std::string& flag, const std::string& value, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FlagError&) {
    throw;
  } catch (const InputError& e) {
    throw FlagError(flag + " '" + value + "': " + e.what());
  }
}

std::pair<Index, Index> parseDims(const std::string& text) {
  const auto comma = text.find(',');
  long long d = 0;
  long long t = 0;
  if (comma == std::string::npos || !parseLong(text.substr(0, comma), d) ||
      !parseLong(text.substr(comma + 1), t) || d < 1 || t < 1) {
    flagError("--dims", text, "expected d,T with positive integers");
  }
  return {static_cast<Index>(d), static_cast<Index>(t)};
}

std::vector<Index> parseRanks(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    long long r = 0;
    if (!parseLong(item, r) || r < 1) flagError("--ranks", text, "expected a comma list of positive integers");
    out.push_back(static_cast<Index>(r));
  }
  if (out.empty()) flagError("--ranks", text, "empty list");
  return out;
}

// ---------------------------------------------------------------------------
// Shared solve options.

struct SolveOptions {
  std::string train;
  std::string test;
  std::string synth;
  std::string dims;
  int rank = 0;
  std::string ranks;
  double C = 1.0;
  double epsilon = 0.0;
  std::string solver = "tr";
  int maxIters = 500;
  double gradTol = 1e-6;
  bool absoluteGradTol = false;
  double innerTol = 1e-10;
  int innerMaxIters = 1000;
  int certEvery = 0;
  double gapTol = 0.0;
  std::uint64_t seed = 0;
  std::string outDir = ".";
  int threads = 0;
};

void addSolveOptions(CLI::App* app, SolveOptions& o, bool cRequired) {
  app->add_option("--rank", o.rank, "Rank r of the factor U (required unless --ranks is given)");
  app->add_option("--ranks", o.ranks, "Comma list of ranks; one independent solve per rank");
  auto* c = app->add_option("--C", o.C, "Loss weight C > 0");
  if (cRequired) {
    c->required();
  } else {
    c->capture_default_str();
  }
  app->add_option("--solver", o.solver, "cg or tr")->capture_default_str();
  app->add_option("--max-iters", o.maxIters, "Outer iteration limit")->capture_default_str();
  app->add_option("--grad-tol", o.gradTol, "Gradient-norm stopping tolerance (relative to the first)")
      ->capture_default_str();
  app->add_flag("--abs-grad-tol", o.absoluteGradTol, "Treat --grad-tol as an absolute threshold");
  app->add_option("--inner-tol", o.innerTol, "Inner solver tolerance")->capture_default_str();
  app->add_option("--inner-max-iters", o.innerMaxIters, "Inner solver iteration limit")
      ->capture_default_str();
  app->add_option("--cert-every", o.certEvery, "Certify the duality gap every k iterations (0: end only)")
      ->capture_default_str();
  app->add_option("--gap-tol", o.gapTol, "Also stop once the relative gap is below this (0: off)")
      ->capture_default_str();
  app->add_option("--seed", o.seed, "Seed for synthetic data and initialization")->capture_default_str();
  app->add_option("-o,--out", o.outDir, "Output directory")->capture_default_str();
  app->add_option("--threads", o.threads, "Worker threads (default: SPECTRA_LR_THREADS or 1)");
}

void validate(const SolveOptions& o) {
  if (o.rank < 0) flagError("--rank", std::to_string(o.rank), "must be >= 1");
  if (o.rank == 0 && o.ranks.empty()) throw FlagError("--rank is required (or give --ranks)");
  if (o.rank != 0 && !o.ranks.empty()) throw FlagError("--rank and --ranks are mutually exclusive");
  if (!o.ranks.empty()) parseRanks(o.ranks);
  if (!(o.C > 0.0) || !std::isfinite(o.C)) flagError("--C", fmt17(o.C), "must be a positive number");
  if (!(o.epsilon >= 0.0)) flagError("--epsilon", fmt17(o.epsilon), "must be >= 0");
  if (o.solver != "cg" && o.solver != "tr") flagError("--solver", o.solver, "expected cg or tr");
  if (o.maxIters < 0) flagError("--max-iters", std::to_string(o.maxIters), "must be >= 0");
  if (!(o.gradTol >= 0.0)) flagError("--grad-tol", fmt17(o.gradTol), "must be >= 0");
  if (!(o.innerTol > 0.0)) flagError("--inner-tol", fmt17(o.innerTol), "must be > 0");
  if (o.innerMaxIters < 1) flagError("--inner-max-iters", std::to_string(o.innerMaxIters), "must be >= 1");
  if (o.certEvery < 0) flagError("--cert-every", std::to_string(o.certEvery), "must be >= 0");
  if (!(o.gapTol >= 0.0)) flagError("--gap-tol", fmt17(o.gapTol), "must be >= 0");
  if (o.threads < 0) flagError("--threads", std::to_string(o.threads), "must be >= 1");
  if (o.train.empty() == o.synth.empty()) throw FlagError("exactly one of --train and --synth is required");
  if (!o.synth.empty() && !o.test.empty()) throw FlagError("--test cannot be combined with --synth");
  if (!o.dims.empty()) parseDims(o.dims);
}

RegularizationParams regularization(const SolveOptions& o) {
  RegularizationParams p;
  p.C = o.C;
  p.epsilon = o.epsilon;
  p.innerTol = o.innerTol;
  p.innerMaxIters = o.innerMaxIters;
  return p;
}

SolverConfig solverConfig(const SolveOptions& o) {
  SolverConfig cfg;
  cfg.maxOuterIters = o.maxIters;
  cfg.gradNormTol = o.gradTol;
  cfg.relativeGradTol = !o.absoluteGradTol;
  cfg.certEvery = o.certEvery;
  cfg.gapTol = o.gapTol;
  cfg.seed = o.seed;
  return cfg;
}

json configEcho(const std::string& sub, const SolveOptions& o) {
  json c;
  c["subcommand"] = sub;
  c["train"] = o.train;
  c["test"] = o.test;
  c["synth"] = o.synth;
  c["dims"] = o.dims;
  c["rank"] = o.rank;
  c["ranks"] = o.ranks;
  c["C"] = o.C;
  c["epsilon"] = o.epsilon;
  c["solver"] = o.solver;
  c["max_iters"] = o.maxIters;
  c["grad_tol"] = o.gradTol;
  c["relative_grad_tol"] = !o.absoluteGradTol;
  c["inner_tol"] = o.innerTol;
  c["inner_max_iters"] = o.innerMaxIters;
  c["cert_every"] = o.certEvery;
  c["gap_tol"] = o.gapTol;
  c["seed"] = o.seed;
  c["out"] = o.outDir;
  c["threads"] = threadCount();
  return c;
}

// ---------------------------------------------------------------------------
// Output files.

void writeText(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write file '" + path.string() + "'");
  f << text;
  if (!f) throw InputError("error while writing '" + path.string() + "'");
}

std::string traceCsv(const std::vector<IterationRecord>& trace) {
  std::string s = "iter,g,gradnorm,step,elapsed_s,duality_gap\n";
  for (const IterationRecord& rec : trace) {
    s += std::to_string(rec.iter) + "," + fmt17(rec.gValue) + "," + fmt17(rec.gradNorm) + "," +
         fmt17(rec.stepSize) + "," + fmt17(rec.elapsedSeconds) + ",";
    if (rec.dualityGap) s += fmt17(*rec.dualityGap);
    s += "\n";
  }
  return s;
}

json matrixJson(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json modelJson(const SolveResult& res, ProblemKind kind, double C) {
  json m;
  m["schema"] = 1;
  m["kind"] = toString(kind);
  m["rows"] = res.u.rows();
  m["cols"] = res.eval.cert.m.cols();
  m["rank"] = res.u.cols();
  m["C"] = C;
  m["g"] = res.eval.value;
  m["U"] = matrixJson(res.u.matrix());
  json dual;
  if (res.eval.cert.m.isSparse()) {
    const SparseMatrix& s = res.eval.cert.m.sparse();
    json entries = json::array();
    for (Index t = 0; t < s.outerSize(); ++t) {
      for (SparseMatrix::InnerIterator it(s, t); it; ++it) {
        entries.push_back(json::array({it.row(), it.col(), it.value()}));
      }
    }
    dual["format"] = "sparse";
    dual["rows"] = s.rows();
    dual["cols"] = s.cols();
    dual["entries"] = std::move(entries);
  } else {
    dual["format"] = "dense";
    dual["rows"] = res.eval.cert.m.rows();
    dual["cols"] = res.eval.cert.m.cols();
    dual["data"] = matrixJson(res.eval.cert.m.dense());
  }
  m["M"] = std::move(dual);
  return m;
}

struct TestMetric {
  std::string name;
  double value = 0.0;
};

struct RunOutcome {
  int exitCode = kOk;
  json summary;
};

/// Solves one rank, writes the three output files into `dir`.
RunOutcome solveAndWrite(const std::string& sub, const SolveOptions& o, const ProblemAdapter& problem,
                         Index rank, const fs::path& dir,
                         const std::function<std::optional<TestMetric>(const SolveResult&)>& metricFn,
                         const json& extra, std::ostream& out) {
  if (rank > problem.rows()) {
    flagError(o.ranks.empty() ? "--rank" : "--ranks", std::to_string(rank),
              "must be <= " + std::to_string(problem.rows()) + " (rows of W)");
  }
  const SolverConfig cfg = solverConfig(o);
  withFlag("--solver", o.solver, [&] { cfg.validate(); });

  const auto t0 = std::chrono::steady_clock::now();
  const ManifoldPoint u0 = initializePoint(problem, problem.rows(), rank, o.seed);
  const SolveResult res = o.solver == "cg" ? solveCG(problem, u0, cfg) : solveTR(problem, u0, cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::optional<TestMetric> tm = metricFn(res);

  fs::create_directories(dir);
  writeText(dir / "trace.csv", traceCsv(res.trace));
  writeText(dir / "model.json", modelJson(res, problem.kind(), problem.params().C).dump(1) + "\n");

  json s;
  s["schema"] = 1;
  s["subcommand"] = sub;
  s["kind"] = toString(problem.kind());
  s["rank"] = rank;
  s["status"] = toString(res.status);
  s["g"] = res.eval.value;
  s["grad_norm"] = res.gradNorm;
  s["duality_gap"] = res.gap.gap;
  s["sigma1"] = res.gap.sigma1;
  s["relative_gap"] = res.gap.relativeGap;
  s["power_converged"] = res.gap.powerConverged;
  s["iterations"] = res.iterations;
  s["inner_converged"] = res.eval.cert.status.converged;
  if (tm) {
    s["test_metric"] = {{"name", tm->name}, {"value", tm->value}};
  } else {
    s["test_metric"] = nullptr;
  }
  s["wall_time_s"] = wall;
  s["config"] = configEcho(sub, o);
  s["version"] = versionString();
  s["git_describe"] = gitDescribe();
  for (auto it = extra.begin(); it != extra.end(); ++it) s[it.key()] = it.value();
  writeText(dir / "summary.json", s.dump(1) + "\n");

  out << sub << " r=" << rank << " status=" << toString(res.status) << " g=" << fmt17(res.eval.value)
      << " gradnorm=" << fmt17(res.gradNorm) << " relgap=" << fmt17(res.gap.relativeGap);
  if (tm) out << " " << tm->name << "=" << fmt17(tm->value);
  out << " iters=" << res.iterations << "\n";

  return {res.status == SolveStatus::converged ? kOk : kNotConverged, std::move(s)};
}

/// One solve per requested rank; sweeps write into rank_<r>/ subdirectories
/// and a top-level summary listing every run.
int runRanks(const std::string& sub, const SolveOptions& o, const ProblemAdapter& problem,
             const std::function<std::optional<TestMetric>(const SolveResult&)>& metricFn,
             const json& extra, std::ostream& out) {
  const fs::path root(o.outDir);
  if (o.ranks.empty()) {
    return solveAndWrite(sub, o, problem, o.rank, root, metricFn, extra, out).exitCode;
  }
  int code = kOk;
  json runs = json::array();
  for (Index r : parseRanks(o.ranks)) {
    RunOutcome oc =
        solveAndWrite(sub, o, problem, r, root / ("rank_" + std::to_string(r)), metricFn, extra, out);
    code = std::max(code, oc.exitCode);
    runs.push_back(std::move(oc.summary));
  }
  json s;
  s["schema"] = 1;
  s["subcommand"] = sub;
  s["sweep"] = std::move(runs);
  s["config"] = configEcho(sub, o);
  s["version"] = versionString();
  s["git_describe"] = gitDescribe();
  fs::create_directories(root);
  writeText(root / "summary.json", s.dump(1) + "\n");
  return code;
}

// ---------------------------------------------------------------------------
// Subcommands.

struct CompletionData {
  ColumnSparseMatrix train;
  std::optional<ColumnSparseMatrix> test;
  json extra = json::object();
};

CompletionData loadCompletion(const SolveOptions& o, bool defaultNonneg) {
  CompletionData cd;
  std::optional<Index> rows;
  std::optional<Index> cols;
  if (!o.dims.empty()) std::tie(rows, cols) = parseDims(o.dims);
  if (!o.synth.empty()) {
    const KeyValueSpec kv("--synth", o.synth,
                          {"d", "T", "r", "frac", "sigma", "outliers", "outlier_scale", "nonneg"});
    CompletionSynthSpec spec;
    spec.d = kv.index("d", spec.d);
    spec.T = kv.index("T", spec.T);
    spec.r = kv.index("r", spec.r);
    spec.sampleFraction = kv.real("frac", spec.sampleFraction);
    spec.noiseSigma = kv.real("sigma", spec.noiseSigma);
    spec.outlierFraction = kv.real("outliers", spec.outlierFraction);
    spec.outlierScale = kv.real("outlier_scale", spec.outlierScale);
    spec.nonnegative = kv.flag("nonneg", defaultNonneg);
    SynthCompletion sc = withFlag("--synth", o.synth, [&] { return synthCompletion(spec, o.seed); });
    cd.train = std::move(sc.train);
    cd.test = std::move(sc.test);
    cd.extra["underdetermined"] = sc.underdetermined;
    return cd;
  }
  cd.train = withFlag("--train", o.train, [&] { return loadTriplets(o.train, rows, cols); });
  if (!o.test.empty()) {
    cd.test = withFlag("--test", o.test, [&] { return loadTriplets(o.test, cd.train.rows(), cd.train.cols()); });
  }
  return cd;
}

int runCompletion(const std::string& sub, ProblemKind kind, const SolveOptions& o, std::ostream& out) {
  CompletionData cd = loadCompletion(o, kind == ProblemKind::nonnegCompletion);
  if (cd.train.rows() == 0 || cd.train.cols() == 0) {
    throw FlagError(o.synth.empty() ? "--train: empty matrix (give --dims)" : "--synth: empty matrix");
  }
  auto problem = withFlag("--C", fmt17(o.C), [&] { return makeCompletionAdapter(kind, cd.train, regularization(o)); });
  const std::optional<ColumnSparseMatrix> test = cd.test;
  auto metricFn = [&](const SolveResult& res) -> std::optional<TestMetric> {
    if (!test || test->nonZeros() == 0) return std::nullopt;
    const Vector pred = predictAt(res.u, res.eval.cert, *test);
    const Vector truth = Eigen::Map<const Vector>(test->values().data(), test->nonZeros());
    return TestMetric{"rmse", rmse(truth, pred)};
  };
  return runRanks(sub, o, *problem, metricFn, cd.extra, out);
}

int runHankel(const SolveOptions& o, const std::string& truthPath, std::ostream& out) {
  Vector y;
  std::optional<Vector> truth;
  Index d = 0;
  Index T = 0;
  if (!o.synth.empty()) {
    const KeyValueSpec kv("--synth", o.synth, {"r0", "d", "T", "sigma", "cap"});
    LTISystemSpec spec;
    spec.order = kv.index("r0", spec.order);
    spec.d = kv.index("d", spec.d);
    spec.T = kv.index("T", spec.T);
    spec.noiseSigma = kv.real("sigma", spec.noiseSigma);
    spec.spectralRadiusCap = kv.real("cap", spec.spectralRadiusCap);
    SynthHankel sh = withFlag("--synth", o.synth, [&] { return synthHankel(spec, o.seed); });
    y = std::move(sh.yNoisy);
    truth = std::move(sh.yTrue);
    d = spec.d;
    T = spec.T;
  } else {
    y = withFlag("--train", o.train, [&] { return loadSignal(o.train); });
    if (y.size() < 1) throw FlagError("--train: signal file '" + o.train + "' holds no values");
    if (!o.dims.empty()) {
      std::tie(d, T) = parseDims(o.dims);
    } else {
      d = (y.size() + 1) / 2;
      T = y.size() + 1 - d;
    }
  }
  if (!truthPath.empty()) truth = withFlag("--truth", truthPath, [&] { return loadSignal(truthPath); });
  if (truth && truth->size() != y.size()) {
    flagError("--truth", truthPath, "length " + std::to_string(truth->size()) + " differs from the signal's");
  }
  HankelProblemData data = withFlag("--dims", o.dims.empty() ? std::to_string(d) + "," + std::to_string(T) : o.dims, [&] { return HankelProblemData::make(y, d, T); });
  json extra;
  extra["transposed"] = data.transposed;
  HankelProblem problem = withFlag("--C", fmt17(o.C), [&] { return HankelProblem(std::move(data), regularization(o)); });
  auto metricFn = [&](const SolveResult& res) -> std::optional<TestMetric> {
    if (!truth) return std::nullopt;
    return TestMetric{"rmse_true", rmse(*truth, hankelRecoverSignal(res.u, res.eval.cert))};
  };
  return runRanks("hankel", o, problem, metricFn, extra, out);
}

int runMTFL(const SolveOptions& o, bool standardize, std::ostream& out) {
  MTFLTaskSet train;
  std::optional<MTFLTaskSet> test;
  if (!o.synth.empty()) {
    const KeyValueSpec kv("--synth", o.synth, {"d", "tasks", "n", "r", "sigma"});
    MTFLSynthSpec spec;
    spec.d = kv.index("d", spec.d);
    spec.tasks = kv.index("tasks", spec.tasks);
    spec.samplesPerTask = kv.index("n", spec.samplesPerTask);
    spec.r = kv.index("r", spec.r);
    spec.noiseSigma = kv.real("sigma", spec.noiseSigma);
    SynthMTFL sm = withFlag("--synth", o.synth, [&] { return synthMTFL(spec, o.seed); });
    train = std::move(sm.train);
    test = std::move(sm.test);
  } else {
    train = withFlag("--train", o.train, [&] { return loadMTFLCsv(o.train); });
    if (!o.test.empty()) test = withFlag("--test", o.test, [&] { return loadMTFLCsv(o.test); });
  }
  if (test && (test->featureDim != train.featureDim || test->taskCount() > train.taskCount())) {
    throw FlagError("--test: feature count or task ids do not match the training set");
  }
  if (standardize) {
    const FeatureScaler scaler = FeatureScaler::fit(train);
    scaler.apply(train);
    if (test) scaler.apply(*test);
  }
  json extra;
  extra["standardized"] = standardize;
  MTFLProblem problem = withFlag("--train", o.train, [&] { return MTFLProblem(std::move(train), regularization(o)); });
  auto metricFn = [&](const SolveResult& res) -> std::optional<TestMetric> {
    if (!test) return std::nullopt;
    const Matrix w = reconstructPrimal(res.u, res.eval.cert).dense();
    std::vector<double> yt;
    std::vector<double> yp;
    for (Index t = 0; t < test->taskCount(); ++t) {
      const MTFLTask& task = test->tasks[static_cast<std::size_t>(t)];
      const Vector p = task.X * w.col(t);
      yt.insert(yt.end(), task.y.data(), task.y.data() + task.y.size());
      yp.insert(yp.end(), p.data(), p.data() + p.size());
    }
    if (yt.empty()) return std::nullopt;
    const Eigen::Map<const Vector> a(yt.data(), static_cast<Index>(yt.size()));
    const Eigen::Map<const Vector> b(yp.data(), static_cast<Index>(yp.size()));
    return TestMetric{"nmse", nmse(a, b)};
  };
  return runRanks("mtfl", o, problem, metricFn, extra, out);
}

struct SynthOptions {
  std::string completion;
  std::string hankel;
  std::string mtfl;
  std::uint64_t seed = 0;
  std::string outDir = ".";
};

int runSynth(const SynthOptions& o, std::ostream& out) {
  const int given = !o.completion.empty() + !o.hankel.empty() + !o.mtfl.empty();
  if (given != 1) throw FlagError("exactly one of --completion, --hankel, --mtfl is required");
  const fs::path dir(o.outDir);
  fs::create_directories(dir);
  if (!o.completion.empty()) {
    const KeyValueSpec kv("--completion", o.completion,
                          {"d", "T", "r", "frac", "sigma", "outliers", "outlier_scale", "nonneg"});
    CompletionSynthSpec spec;
    spec.d = kv.index("d", spec.d);
    spec.T = kv.index("T", spec.T);
    spec.r = kv.index("r", spec.r);
    spec.sampleFraction = kv.real("frac", spec.sampleFraction);
    spec.noiseSigma = kv.real("sigma", spec.noiseSigma);
    spec.outlierFraction = kv.real("outliers", spec.outlierFraction);
    spec.outlierScale = kv.real("outlier_scale", spec.outlierScale);
    spec.nonnegative = kv.flag("nonneg", false);
    const SynthCompletion sc = withFlag("--completion", o.completion, [&] { return synthCompletion(spec, o.seed); });
    saveTriplets((dir / "train.txt").string(), sc.train);
    saveTriplets((dir / "test.txt").string(), sc.test);
    out << "wrote " << (dir / "train.txt").string() << " and " << (dir / "test.txt").string() << "\n";
    if (sc.underdetermined) out << "warning: sample count is below the rank-r degrees of freedom\n";
  } else if (!o.hankel.empty()) {
    const KeyValueSpec kv("--hankel", o.hankel, {"r0", "d", "T", "sigma", "cap"});
    LTISystemSpec spec;
    spec.order = kv.index("r0", spec.order);
    spec.d = kv.index("d", spec.d);
    spec.T = kv.index("T", spec.T);
    spec.noiseSigma = kv.real("sigma", spec.noiseSigma);
    spec.spectralRadiusCap = kv.real("cap", spec.spectralRadiusCap);
    const SynthHankel sh = withFlag("--hankel", o.hankel, [&] { return synthHankel(spec, o.seed); });
    saveSignal((dir / "yTrue.txt").string(), sh.yTrue);
    saveSignal((dir / "yNoisy.txt").string(), sh.yNoisy);
    out << "wrote " << (dir / "yTrue.txt").string() << " and " << (dir / "yNoisy.txt").string() << "\n";
    if (!sh.rankCheckPassed) out << "warning: Hankel rank check failed after " << sh.attempts << " draws\n";
  } else {
    const KeyValueSpec kv("--mtfl", o.mtfl, {"d", "tasks", "n", "r", "sigma"});
    MTFLSynthSpec spec;
    spec.d = kv.index("d", spec.d);
    spec.tasks = kv.index("tasks", spec.tasks);
    spec.samplesPerTask = kv.index("n", spec.samplesPerTask);
    spec.r = kv.index("r", spec.r);
    spec.noiseSigma = kv.real("sigma", spec.noiseSigma);
    const SynthMTFL sm = withFlag("--mtfl", o.mtfl, [&] { return synthMTFL(spec, o.seed); });
    saveMTFLCsv((dir / "train.csv").string(), sm.train);
    saveMTFLCsv((dir / "test.csv").string(), sm.test);
    out << "wrote " << (dir / "train.csv").string() << " and " << (dir / "test.csv").string() << "\n";
  }
  return kOk;
}

Matrix jsonMatrix(const json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw FlagError("--model: field '" + what + "' must be a non-empty array of rows");
  }
  const Index n = static_cast<Index>(rows.size());
  const Index m = static_cast<Index>(rows[0].size());
  Matrix out(n, m);
  for (Index i = 0; i < n; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != m) {
      throw FlagError("--model: field '" + what + "' has ragged rows");
    }
    for (Index j = 0; j < m; ++j) out(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return out;
}

int runCheckCert(const std::string& modelArg, double threshold, std::ostream& out) {
  if (!(threshold >= 0.0)) flagError("--threshold", fmt17(threshold), "must be >= 0");
  fs::path path(modelArg);
  if (fs::is_directory(path)) path /= "model.json";
  std::ifstream f(path);
  if (!f) throw FlagError("--model: cannot open '" + path.string() + "'");
  json m;
  try {
    m = json::parse(f);
    const Matrix u = jsonMatrix(m.at("U"), "U");
    const json& dual = m.at("M");
    const Index rows = dual.at("rows").get<Index>();
    const Index cols = dual.at("cols").get<Index>();
    if (rows != u.rows()) throw FlagError("--model: M has " + std::to_string(rows) + " rows but U has " +
                                          std::to_string(u.rows()));
    CompositeDual md;
    const std::string format = dual.at("format").get<std::string>();
    if (format == "sparse") {
      std::vector<Eigen::Triplet<double>> trips;
      for (const json& e : dual.at("entries")) {
        const Index i = e.at(0).get<Index>();
        const Index t = e.at(1).get<Index>();
        if (i < 0 || i >= rows || t < 0 || t >= cols) throw FlagError("--model: M entry out of range");
        trips.emplace_back(i, t, e.at(2).get<double>());
      }
      SparseMatrix s(rows, cols);
      s.setFromTriplets(trips.begin(), trips.end());
      md = CompositeDual::fromSparse(std::move(s));
    } else if (format == "dense") {
      Matrix dm = jsonMatrix(dual.at("data"), "M.data");
      if (dm.rows() != rows || dm.cols() != cols) throw FlagError("--model: M.data shape mismatch");
      md = CompositeDual::fromDense(std::move(dm));
    } else {
      throw FlagError("--model: unknown M format '" + format + "'");
    }
    const double g = m.at("g").get<double>();
    const ManifoldPoint point = withFlag("--model", path.string(), [&] { return ManifoldPoint(u); });
    const GapReport rep = dualityGap(point, md, g);
    out << "duality_gap " << fmt17(rep.gap) << "\n";
    out << "sigma1 " << fmt17(rep.sigma1) << "\n";
    out << "relative_gap " << fmt17(rep.relativeGap) << "\n";
    const bool ok = rep.relativeGap <= threshold;
    out << (ok ? "certified" : "not certified") << " (threshold " << fmt17(threshold) << ")\n";
    return ok ? kOk : kNotConverged;
  } catch (const json::exception& e) {
    throw FlagError("--model: malformed model file '" + path.string() + "': " + e.what());
  }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structured low-rank matrix learning on the spectrahedron", "spectra-lr"};
  app.set_version_flag("--version", std::string(versionString()) + " (" + gitDescribe() + ")");
  app.require_subcommand(1);

  SolveOptions complete;
  SolveOptions robust;
  SolveOptions nonneg;
  SolveOptions hankel;
  SolveOptions mtfl;
  std::string robustLoss = "l1";
  std::string hankelTruth;
  bool standardize = false;
  SynthOptions synth;
  std::string modelPath;
  double threshold = 1e-6;

  auto addCompletionData = [](CLI::App* sub, SolveOptions& o) {
    sub->add_option("--train", o.train, "Training triplets file (row col value, 1-based)");
    sub->add_option("--test", o.test, "Test triplets file");
    sub->add_option("--synth", o.synth,
                    "Synthetic instance, e.g. d=100,T=200,r=5,frac=0.25[,sigma=0][,outliers=0]"
                    "[,outlier_scale=10][,nonneg=0]");
    sub->add_option("--dims", o.dims, "d,T when the triplet file has no header");
  };

  auto* cComplete = app.add_subcommand("complete", "Square-loss matrix completion");
  addCompletionData(cComplete, complete);
  addSolveOptions(cComplete, complete, false);

  auto* cRobust = app.add_subcommand("robust-complete", "Completion with the l1 or epsilon-insensitive loss");
  addCompletionData(cRobust, robust);
  addSolveOptions(cRobust, robust, false);
  cRobust->add_option("--loss", robustLoss, "l1 or eps-svr")->capture_default_str();
  cRobust->add_option("--epsilon", robust.epsilon, "Insensitivity width for eps-svr")->capture_default_str();

  auto* cNonneg = app.add_subcommand("nn-complete", "Square-loss completion with W >= 0");
  addCompletionData(cNonneg, nonneg);
  addSolveOptions(cNonneg, nonneg, false);

  auto* cHankel = app.add_subcommand("hankel", "Low-rank Hankel approximation of a noisy signal");
  cHankel->add_option("--train", hankel.train, "Signal file, one value per line");
  cHankel->add_option("--synth", hankel.synth, "Synthetic system, e.g. r0=5,d=100,T=100,sigma=0.05[,cap=0.9]");
  cHankel->add_option("--dims", hankel.dims, "d,T with d + T - 1 = signal length");
  cHankel->add_option("--truth", hankelTruth, "Clean signal for the recovery RMSE");
  addSolveOptions(cHankel, hankel, false);

  auto* cMtfl = app.add_subcommand("mtfl", "Multi-task feature learning");
  cMtfl->add_option("--train", mtfl.train, "CSV of task,y,x1..xd");
  cMtfl->add_option("--test", mtfl.test, "Test CSV");
  cMtfl->add_option("--synth", mtfl.synth, "Synthetic tasks, e.g. d=20,tasks=10,n=30,r=3,sigma=0.1");
  cMtfl->add_flag("--standardize", standardize, "z-score features with training statistics");
  addSolveOptions(cMtfl, mtfl, true);

  auto* cSynth = app.add_subcommand("synth", "Write a synthetic dataset");
  cSynth->add_option("--completion", synth.completion, "d=..,T=..,r=..,frac=..[,sigma,outliers,nonneg]");
  cSynth->add_option("--hankel", synth.hankel, "r0=..,d=..,T=..,sigma=..[,cap]");
  cSynth->add_option("--mtfl", synth.mtfl, "d=..,tasks=..,n=..,r=..,sigma=..");
  cSynth->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  cSynth->add_option("-o,--out", synth.outDir, "Output directory")->capture_default_str();

  auto* cCheck = app.add_subcommand("check-cert", "Recompute the duality gap of a saved model");
  cCheck->add_option("--model,model", modelPath, "model.json or the directory holding it")->required();
  cCheck->add_option("--threshold", threshold, "Relative gap accepted as certified")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  auto prepare = [](const SolveOptions& o) {
    validate(o);
    if (o.threads > 0) setThreadCount(o.threads);
  };

  if (cComplete->parsed()) {
    prepare(complete);
    return runCompletion("complete", ProblemKind::completion, complete, out);
  }
  if (cRobust->parsed()) {
    prepare(robust);
    if (robustLoss != "l1" && robustLoss != "eps-svr") flagError("--loss", robustLoss, "expected l1 or eps-svr");
    if (robustLoss == "l1" && robust.epsilon != 0.0) throw FlagError("--epsilon requires --loss eps-svr");
    return runCompletion("robust-complete",
                         robustLoss == "l1" ? ProblemKind::robustL1 : ProblemKind::robustEpsSVR, robust, out);
  }
  if (cNonneg->parsed()) {
    prepare(nonneg);
    return runCompletion("nn-complete", ProblemKind::nonnegCompletion, nonneg, out);
  }
  if (cHankel->parsed()) {
    prepare(hankel);
    return runHankel(hankel, hankelTruth, out);
  }
  if (cMtfl->parsed()) {
    prepare(mtfl);
    return runMTFL(mtfl, standardize, out);
  }
  if (cSynth->parsed()) return runSynth(synth, out);
  return runCheckCert(modelPath, threshold, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace spectra_lr::cli
