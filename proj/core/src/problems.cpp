#include <spectra_lr/problems.hpp>
#include <spectra_lr/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spectra_lr {

ProblemAdapter::ProblemAdapter(Index rows, Index cols, RegularizationParams params)
    : rows_(rows), cols_(cols), params_(params) {
  params_.validate();
}

Matrix ProblemAdapter::euclideanGradient(const ManifoldPoint& u, const Evaluation& at) const {
  return eucGradient(u, at.cert);
}

Matrix ProblemAdapter::euclideanHessVec(const ManifoldPoint& u, const Matrix& v,
                                        const Evaluation& at) const {
  if (v.rows() != u.rows() || v.cols() != u.cols()) {
    throw InputError("euclideanHessVec: direction shape differs from U");
  }
  return assembleHessVec(u, v, at.cert.m, dualDirectionalDerivative(u, v, at));
}

double ProblemAdapter::constraintViolation(const Matrix&) const { return 0.0; }

namespace {

void requireShape(const ProblemAdapter& p, const ManifoldPoint& u) {
  if (u.rows() != p.rows()) {
    std::ostringstream os;
    os << "U has " << u.rows() << " rows but the problem has d = " << p.rows();
    throw InputError(os.str());
  }
}

void requireMatrixShape(const ProblemAdapter& p, const Matrix& w) {
  if (w.rows() != p.rows() || w.cols() != p.cols()) throw InputError("W shape differs from the problem");
}

/// Copy of `pattern` with its stored values replaced column by column.
SparseMatrix withValues(const SparseMatrix& pattern, const std::vector<Vector>& columns) {
  SparseMatrix m = pattern;
  double* out = m.valuePtr();
  for (const Vector& c : columns) {
    std::copy(c.data(), c.data() + c.size(), out);
    out += c.size();
  }
  return m;
}

template <class Cache>
const Cache& requireCache(const Evaluation& at) {
  const auto* c = dynamic_cast<const Cache*>(at.cache.get());
  if (c == nullptr) throw InputError("evaluation was produced by a different adapter");
  return *c;
}

struct SquareCache final : InnerCache {
  std::vector<SquareLossColumn> cols;
};

struct BoxCache final : InnerCache {
  std::vector<BoxColumn> cols;
};

struct NonnegCache final : InnerCache {
  std::vector<NonnegColumn> cols;
};

struct MTFLCache final : InnerCache {
  std::vector<SquareLossColumn> cols;
};

Matrix sparseTimes(const ColumnSparseMatrix& y, const Matrix& x) {
  Matrix out = Matrix::Zero(y.rows(), x.cols());
  for (Index t = 0; t < y.cols(); ++t) {
    auto idx = y.columnIndices(t);
    auto val = y.columnValues(t);
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(idx[k]) += val[k] * x.row(t);
  }
  return out;
}

Matrix sparseTransposeTimes(const ColumnSparseMatrix& y, const Matrix& x) {
  Matrix out = Matrix::Zero(y.cols(), x.cols());
  for (Index t = 0; t < y.cols(); ++t) {
    auto idx = y.columnIndices(t);
    auto val = y.columnValues(t);
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(t) += val[k] * x.row(idx[k]);
  }
  return out;
}

template <class F>
double sumObserved(const ColumnSparseMatrix& y, const Matrix& w, F f) {
  double total = 0.0;
  for (Index t = 0; t < y.cols(); ++t) {
    auto idx = y.columnIndices(t);
    auto val = y.columnValues(t);
    for (std::size_t k = 0; k < idx.size(); ++k) total += f(val[k] - w(idx[k], t));
  }
  return total;
}

}  // namespace

// ---- completion -----------------------------------------------------------

CompletionProblem::CompletionProblem(ColumnSparseMatrix data, RegularizationParams params)
    : ProblemAdapter(data.rows(), data.cols(), params), data_(std::move(data)) {
  sparse_ = data_.toSparse();
  sparse_.makeCompressed();
}

Evaluation CompletionProblem::evaluate(const ManifoldPoint& u, const DualCertificate*) const {
  requireShape(*this, u);
  auto cache = std::make_shared<SquareCache>();
  cache->cols.resize(static_cast<std::size_t>(cols()));
  parallelFor(cols(), [&](Index t) {
    cache->cols[t] = solveInnerSquareLoss(u.matrix(), data_.columnIndices(t),
                                          Vector(data_.columnVector(t)), params());
  });
  Evaluation ev;
  ev.cert.kind = kind();
  ev.cert.z.reserve(cache->cols.size());
  for (const auto& c : cache->cols) {
    ev.value += c.value;
    ev.cert.z.push_back(c.z);
    ev.cert.status.maxResidual = std::max(ev.cert.status.maxResidual, c.residual);
  }
  ev.cert.m = CompositeDual::fromSparse(withValues(sparse_, ev.cert.z));
  ev.cache = std::move(cache);
  return ev;
}

CompositeDual CompletionProblem::dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                                           const Evaluation& at) const {
  const auto& cache = requireCache<SquareCache>(at);
  std::vector<Vector> zDot(static_cast<std::size_t>(cols()));
  parallelFor(cols(), [&](Index t) {
    auto idx = data_.columnIndices(t);
    zDot[t] = squareLossDerivative(gatherRows(u.matrix(), idx), gatherRows(v, idx), cache.cols[t],
                                   params().C);
  });
  return CompositeDual::fromSparse(withValues(sparse_, zDot));
}

Matrix CompletionProblem::dataMatrixTimes(const Matrix& x) const { return sparseTimes(data_, x); }
Matrix CompletionProblem::dataMatrixTransposeTimes(const Matrix& y) const {
  return sparseTransposeTimes(data_, y);
}

double CompletionProblem::loss(const Matrix& w) const {
  requireMatrixShape(*this, w);
  return sumObserved(data_, w, [](double r) { return r * r; });
}

// ---- robust completion ----------------------------------------------------

RobustCompletionProblem::RobustCompletionProblem(ColumnSparseMatrix data,
                                                 RegularizationParams params, ProblemKind kind)
    : ProblemAdapter(data.rows(), data.cols(),
                     kind == ProblemKind::robustL1 ? RegularizationParams{params.C, 0.0,
                                                                          params.innerTol,
                                                                          params.innerMaxIters}
                                                   : params),
      data_(std::move(data)),
      kind_(kind) {
  if (kind != ProblemKind::robustL1 && kind != ProblemKind::robustEpsSVR) {
    throw InputError("RobustCompletionProblem: kind must be robustL1 or robustEpsSVR");
  }
  sparse_ = data_.toSparse();
  sparse_.makeCompressed();
}

Evaluation RobustCompletionProblem::evaluate(const ManifoldPoint& u,
                                             const DualCertificate* warm) const {
  requireShape(*this, u);
  const bool useWarm = warm != nullptr && warm->kind == kind_ &&
                       static_cast<Index>(warm->z.size()) == cols();
  auto cache = std::make_shared<BoxCache>();
  cache->cols.resize(static_cast<std::size_t>(cols()));
  parallelFor(cols(), [&](Index t) {
    const Vector* w = useWarm ? &warm->z[t] : nullptr;
    cache->cols[t] = solveInnerBoxQP(gatherRows(u.matrix(), data_.columnIndices(t)),
                                     Vector(data_.columnVector(t)), params().C, params().epsilon,
                                     params().innerTol, params().innerMaxIters, w);
  });
  Evaluation ev;
  ev.cert.kind = kind_;
  ev.cert.z.reserve(cache->cols.size());
  for (const auto& c : cache->cols) {
    ev.value += c.value;
    ev.cert.z.push_back(c.z);
    ev.cert.status.converged = ev.cert.status.converged && c.converged;
    ev.cert.status.maxIterations = std::max(ev.cert.status.maxIterations, c.sweeps);
    ev.cert.status.maxResidual = std::max(ev.cert.status.maxResidual, c.lastChange);
  }
  ev.cert.m = CompositeDual::fromSparse(withValues(sparse_, ev.cert.z));
  ev.cache = std::move(cache);
  return ev;
}

CompositeDual RobustCompletionProblem::dualDirectionalDerivative(const ManifoldPoint& u,
                                                                 const Matrix& v,
                                                                 const Evaluation& at) const {
  const auto& cache = requireCache<BoxCache>(at);
  std::vector<Vector> zDot(static_cast<std::size_t>(cols()));
  parallelFor(cols(), [&](Index t) {
    auto idx = data_.columnIndices(t);
    zDot[t] = boxDerivative(gatherRows(u.matrix(), idx), gatherRows(v, idx), cache.cols[t],
                            params().C, params().epsilon);
  });
  return CompositeDual::fromSparse(withValues(sparse_, zDot));
}

Matrix RobustCompletionProblem::dataMatrixTimes(const Matrix& x) const {
  return sparseTimes(data_, x);
}
Matrix RobustCompletionProblem::dataMatrixTransposeTimes(const Matrix& y) const {
  return sparseTransposeTimes(data_, y);
}

double RobustCompletionProblem::loss(const Matrix& w) const {
  requireMatrixShape(*this, w);
  const double eps = params().epsilon;
  return sumObserved(data_, w, [eps](double r) { return std::max(std::abs(r) - eps, 0.0); });
}

// ---- non-negative completion ----------------------------------------------

NonnegCompletionProblem::NonnegCompletionProblem(ColumnSparseMatrix data,
                                                 RegularizationParams params)
    : ProblemAdapter(data.rows(), data.cols(), params), data_(std::move(data)) {
  sparse_ = data_.toSparse();
  sparse_.makeCompressed();
}

namespace {

SparseMatrix assembleNonnegDual(const ColumnSparseMatrix& data, const std::vector<Vector>& z,
                                const std::vector<SparseColumn>& s) {
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(static_cast<std::size_t>(data.nonZeros()));
  for (Index t = 0; t < data.cols(); ++t) {
    auto idx = data.columnIndices(t);
    for (std::size_t k = 0; k < idx.size(); ++k) ts.emplace_back(idx[k], t, z[t](k));
    for (std::size_t k = 0; k < s[t].index.size(); ++k) ts.emplace_back(s[t].index[k], t, s[t].value[k]);
  }
  SparseMatrix m(data.rows(), data.cols());
  m.setFromTriplets(ts.begin(), ts.end());
  return m;
}

}  // namespace

Evaluation NonnegCompletionProblem::evaluate(const ManifoldPoint& u,
                                             const DualCertificate* warm) const {
  requireShape(*this, u);
  const bool useWarm = warm != nullptr && warm->kind == kind() &&
                       static_cast<Index>(warm->s.size()) == cols();
  auto cache = std::make_shared<NonnegCache>();
  cache->cols.resize(static_cast<std::size_t>(cols()));
  parallelFor(cols(), [&](Index t) {
    Vector s0;
    if (useWarm) {
      s0 = Vector::Zero(rows());
      const SparseColumn& w = warm->s[t];
      for (std::size_t k = 0; k < w.index.size(); ++k) s0(w.index[k]) = w.value[k];
    }
    NonnegColumn col = solveInnerNonneg(u.matrix(), data_.columnIndices(t),
                                        Vector(data_.columnVector(t)), params(),
                                        useWarm ? &s0 : nullptr);
    for (Index i = 0; i < col.s.size(); ++i) {
      if (col.s(i) < 1e-14) col.s(i) = 0.0;
    }
    cache->cols[t] = std::move(col);
  });
  Evaluation ev;
  ev.cert.kind = kind();
  ev.cert.z.reserve(cache->cols.size());
  ev.cert.s.resize(cache->cols.size());
  for (std::size_t t = 0; t < cache->cols.size(); ++t) {
    const NonnegColumn& c = cache->cols[t];
    ev.value += c.value;
    ev.cert.z.push_back(c.z);
    for (Index i = 0; i < c.s.size(); ++i) {
      if (c.s(i) > 0.0) {
        ev.cert.s[t].index.push_back(i);
        ev.cert.s[t].value.push_back(c.s(i));
      }
    }
    ev.cert.status.converged = ev.cert.status.converged && c.converged;
    ev.cert.status.maxIterations = std::max(ev.cert.status.maxIterations, c.iterations);
    ev.cert.status.maxResidual = std::max(ev.cert.status.maxResidual, c.residual);
  }
  ev.cert.m = CompositeDual::fromSparse(assembleNonnegDual(data_, ev.cert.z, ev.cert.s));
  ev.cache = std::move(cache);
  return ev;
}

CompositeDual NonnegCompletionProblem::dualDirectionalDerivative(const ManifoldPoint& u,
                                                                 const Matrix& v,
                                                                 const Evaluation& at) const {
  const auto& cache = requireCache<NonnegCache>(at);
  std::vector<Vector> zDot(static_cast<std::size_t>(cols()));
  std::vector<SparseColumn> sDot(static_cast<std::size_t>(cols()));
  parallelFor(cols(), [&](Index t) {
    NonnegDerivative d = nonnegDerivative(u.matrix(), v, data_.columnIndices(t), cache.cols[t],
                                          params().C);
    zDot[t] = std::move(d.zDot);
    for (Index i = 0; i < d.sDot.size(); ++i) {
      if (cache.cols[t].s(i) > 0.0) {
        sDot[t].index.push_back(i);
        sDot[t].value.push_back(d.sDot(i));
      }
    }
  });
  return CompositeDual::fromSparse(assembleNonnegDual(data_, zDot, sDot));
}

Matrix NonnegCompletionProblem::dataMatrixTimes(const Matrix& x) const {
  return sparseTimes(data_, x);
}
Matrix NonnegCompletionProblem::dataMatrixTransposeTimes(const Matrix& y) const {
  return sparseTransposeTimes(data_, y);
}

double NonnegCompletionProblem::loss(const Matrix& w) const {
  requireMatrixShape(*this, w);
  return sumObserved(data_, w, [](double r) { return r * r; });
}

double NonnegCompletionProblem::constraintViolation(const Matrix& w) const {
  requireMatrixShape(*this, w);
  return std::max(0.0, -w.minCoeff());
}

// ---- Hankel ---------------------------------------------------------------

HankelProblemData HankelProblemData::make(Vector y, Index d, Index T) {
  if (d < 1 || T < 1) throw InputError("Hankel dimensions must be positive");
  if (y.size() != d + T - 1) {
    std::ostringstream os;
    os << "Hankel signal has length " << y.size() << ", expected d + T - 1 = " << d + T - 1;
    throw InputError(os.str());
  }
  HankelProblemData data;
  data.yNoisy = std::move(y);
  data.transposed = d > T;
  data.d = std::min(d, T);
  data.T = std::max(d, T);
  return data;
}

Matrix hankelMatrix(const Vector& y, Index d, Index T) { return spreadAntiDiagonals(y, d, T); }

HankelProblem::HankelProblem(HankelProblemData data, RegularizationParams params)
    : ProblemAdapter(data.d, data.T, params), data_(std::move(data)) {
  if (data_.yNoisy.size() != data_.d + data_.T - 1) {
    throw InputError("HankelProblem: signal length must be d + T - 1");
  }
}

Evaluation HankelProblem::evaluate(const ManifoldPoint& u, const DualCertificate* warm) const {
  requireShape(*this, u);
  const Matrix* warmS = nullptr;
  if (warm != nullptr && warm->kind == kind() && warm->hankelS.rows() == rows() &&
      warm->hankelS.cols() == cols()) {
    warmS = &warm->hankelS;
  }
  HankelSolution sol = solveInnerHankel(u.matrix(), data_.yNoisy, rows(), cols(), params(), warmS);
  Evaluation ev;
  ev.value = sol.value;
  ev.cert.kind = kind();
  ev.cert.z = {sol.z};
  ev.cert.status.converged = sol.converged;
  ev.cert.status.maxIterations = sol.iterations;
  ev.cert.status.maxResidual = sol.residual;
  ev.cert.m = CompositeDual::fromDense(sol.S);
  ev.cert.hankelS = std::move(sol.S);
  return ev;
}

CompositeDual HankelProblem::dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                                       const Evaluation& at) const {
  if (at.cert.hankelS.rows() != rows()) throw InputError("evaluation was produced by a different adapter");
  return CompositeDual::fromDense(hankelDerivative(u.matrix(), v, at.cert.hankelS, params()));
}

Matrix HankelProblem::dataMatrixTimes(const Matrix& x) const {
  return hankelMatrix(data_.yNoisy, rows(), cols()) * x;
}
Matrix HankelProblem::dataMatrixTransposeTimes(const Matrix& y) const {
  return hankelMatrix(data_.yNoisy, rows(), cols()).transpose() * y;
}

double HankelProblem::loss(const Matrix& w) const {
  requireMatrixShape(*this, w);
  return (data_.yNoisy - antiDiagonalMeans(w)).squaredNorm();
}

double HankelProblem::constraintViolation(const Matrix& w) const {
  requireMatrixShape(*this, w);
  return (w - hankelMatrix(antiDiagonalMeans(w), rows(), cols())).norm();
}

// ---- multi-task feature learning ------------------------------------------

void MTFLTaskSet::validate() const {
  if (tasks.empty()) throw InputError("multi-task data has no tasks");
  if (featureDim < 1) throw InputError("multi-task feature dimension must be positive");
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const MTFLTask& task = tasks[t];
    std::ostringstream os;
    if (task.X.rows() < 1) {
      os << "task " << t << " has no samples";
    } else if (task.X.cols() != featureDim) {
      os << "task " << t << " has " << task.X.cols() << " features, expected " << featureDim;
    } else if (task.y.size() != task.X.rows()) {
      os << "task " << t << " has " << task.y.size() << " targets for " << task.X.rows() << " samples";
    } else {
      continue;
    }
    throw InputError(os.str());
  }
}

MTFLProblem::MTFLProblem(MTFLTaskSet data, RegularizationParams params)
    : ProblemAdapter(data.featureDim, data.taskCount(), params), data_(std::move(data)) {
  data_.validate();
  dataMatrix_.resize(rows(), cols());
  for (Index t = 0; t < cols(); ++t) dataMatrix_.col(t) = data_.tasks[t].X.transpose() * data_.tasks[t].y;
}

Evaluation MTFLProblem::evaluate(const ManifoldPoint& u, const DualCertificate*) const {
  requireShape(*this, u);
  auto cache = std::make_shared<MTFLCache>();
  cache->cols.resize(static_cast<std::size_t>(cols()));
  Matrix m(rows(), cols());
  parallelFor(cols(), [&](Index t) {
    const MTFLTask& task = data_.tasks[t];
    cache->cols[t] = solveInnerMTFL(u.matrix(), task.X, task.y, params());
    m.col(t) = task.X.transpose() * cache->cols[t].z;
  });
  Evaluation ev;
  ev.cert.kind = kind();
  for (const auto& c : cache->cols) {
    ev.value += c.value;
    ev.cert.z.push_back(c.z);
    ev.cert.status.maxResidual = std::max(ev.cert.status.maxResidual, c.residual);
  }
  ev.cert.m = CompositeDual::fromDense(std::move(m));
  ev.cache = std::move(cache);
  return ev;
}

CompositeDual MTFLProblem::dualDirectionalDerivative(const ManifoldPoint& u, const Matrix& v,
                                                     const Evaluation& at) const {
  const auto& cache = requireCache<MTFLCache>(at);
  Matrix mDot(rows(), cols());
  parallelFor(cols(), [&](Index t) {
    const MTFLTask& task = data_.tasks[t];
    const Vector zDot =
        squareLossDerivative(task.X * u.matrix(), task.X * v, cache.cols[t], params().C);
    mDot.col(t) = task.X.transpose() * zDot;
  });
  return CompositeDual::fromDense(std::move(mDot));
}

Matrix MTFLProblem::dataMatrixTimes(const Matrix& x) const { return dataMatrix_ * x; }
Matrix MTFLProblem::dataMatrixTransposeTimes(const Matrix& y) const {
  return dataMatrix_.transpose() * y;
}

double MTFLProblem::loss(const Matrix& w) const {
  requireMatrixShape(*this, w);
  double total = 0.0;
  for (Index t = 0; t < cols(); ++t) {
    total += (data_.tasks[t].y - data_.tasks[t].X * w.col(t)).squaredNorm();
  }
  return total;
}

// ---- entry points ---------------------------------------------------------

std::unique_ptr<ProblemAdapter> makeCompletionAdapter(ProblemKind kind, ColumnSparseMatrix data,
                                                      RegularizationParams params) {
  switch (kind) {
    case ProblemKind::completion:
      return std::make_unique<CompletionProblem>(std::move(data), params);
    case ProblemKind::robustL1:
    case ProblemKind::robustEpsSVR:
      return std::make_unique<RobustCompletionProblem>(std::move(data), params, kind);
    case ProblemKind::nonnegCompletion:
      return std::make_unique<NonnegCompletionProblem>(std::move(data), params);
    default:
      throw InputError(std::string("not a completion kind: ") + toString(kind));
  }
}

Evaluation evaluateG(const ProblemAdapter& adapter, const ManifoldPoint& u,
                     const DualCertificate* warm) {
  return adapter.evaluate(u, warm);
}

Vector predictCompletion(const ManifoldPoint& u, const DualCertificate& cert,
                         const std::vector<std::pair<Index, Index>>& queries) {
  const FactoredPrimal w = reconstructPrimal(u, cert);
  Vector out(static_cast<Index>(queries.size()));
  for (std::size_t k = 0; k < queries.size(); ++k) {
    const auto [i, t] = queries[k];
    if (i < 0 || i >= w.rows() || t < 0 || t >= w.cols()) throw InputError("prediction query out of range");
    out(static_cast<Index>(k)) = w.entry(i, t);
  }
  return out;
}

Vector predictAt(const ManifoldPoint& u, const DualCertificate& cert,
                 const ColumnSparseMatrix& pattern) {
  std::vector<std::pair<Index, Index>> queries;
  queries.reserve(static_cast<std::size_t>(pattern.nonZeros()));
  for (Index t = 0; t < pattern.cols(); ++t) {
    for (Index i : pattern.columnIndices(t)) queries.emplace_back(i, t);
  }
  return predictCompletion(u, cert, queries);
}

double predictMTFL(const ManifoldPoint& u, const DualCertificate& cert, Index task, const Vector& x) {
  if (task < 0 || task >= cert.m.cols()) throw InputError("predictMTFL: task index out of range");
  if (x.size() != u.rows()) throw InputError("predictMTFL: feature vector has the wrong length");
  const FactoredPrimal w = reconstructPrimal(u, cert);
  return x.dot(w.left * w.right.col(task));
}

Vector hankelRecoverSignal(const ManifoldPoint& u, const DualCertificate& cert) {
  return antiDiagonalMeans(reconstructPrimal(u, cert).dense());
}

}  // namespace spectra_lr
