#include <spectra_lr/inner_duals.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <sstream>

namespace spectra_lr {

namespace {

double softThreshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double sign(double x) { return (x > 0.0) - (x < 0.0); }

Eigen::LLT<Matrix> woodburyKernel(const Matrix& basis, double C) {
  const Index r = basis.cols();
  Matrix k = basis.transpose() * basis;
  k.diagonal().array() += 1.0 / (2.0 * C);
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success || r == 0) {
    // K >= I/(2C) > 0, so this only triggers on non-finite input.
    if (r > 0) throw InputError("square-loss kernel is not positive definite (non-finite U?)");
  }
  return llt;
}

Vector minNormSolve(const Matrix& a, const Vector& b) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  cod.setThreshold(1e-12);
  return cod.solve(b);
}

}  // namespace

Matrix gatherRows(const Matrix& u, std::span<const Index> index) {
  Matrix b(static_cast<Index>(index.size()), u.cols());
  for (std::size_t k = 0; k < index.size(); ++k) b.row(static_cast<Index>(k)) = u.row(index[k]);
  return b;
}

SquareLossColumn solveInnerSquareLoss(const Matrix& basis, const Vector& y, double C) {
  if (basis.rows() != y.size()) throw InputError("solveInnerSquareLoss: basis/y size mismatch");
  SquareLossColumn col;
  const double eps = 1.0 / (2.0 * C);
  col.kernel = woodburyKernel(basis, C);
  if (y.size() == 0) {
    col.z = Vector(0);
    col.v = Vector::Zero(basis.cols());
    return col;
  }
  col.v = col.kernel.solve(basis.transpose() * y);
  col.z = 2.0 * C * (y - basis * col.v);
  // One step of iterative refinement on (eps I + B B^T) z = y.
  Vector res = y - eps * col.z - basis * (basis.transpose() * col.z);
  col.z += 2.0 * C * (res - basis * col.kernel.solve(basis.transpose() * res));
  col.v = basis.transpose() * col.z;
  // At the maximizer the objective equals <y, z>/2.
  col.value = 0.5 * y.dot(col.z);
  col.residual = (y - eps * col.z - basis * col.v).norm();
  return col;
}

SquareLossColumn solveInnerSquareLoss(const Matrix& u, std::span<const Index> index,
                                      const Vector& y, const RegularizationParams& params) {
  return solveInnerSquareLoss(gatherRows(u, index), y, params.C);
}

SquareLossColumn solveInnerMTFL(const Matrix& u, const Matrix& features, const Vector& y,
                                const RegularizationParams& params) {
  if (features.cols() != u.rows()) throw InputError("solveInnerMTFL: feature dimension mismatch");
  return solveInnerSquareLoss(features * u, y, params.C);
}

Vector squareLossDerivative(const Matrix& basis, const Matrix& basisDot,
                            const SquareLossColumn& col, double C) {
  if (col.z.size() == 0) return Vector(0);
  const double eps = 1.0 / (2.0 * C);
  const Vector rhs = eps * (basisDot.transpose() * col.z) - basis.transpose() * (basisDot * col.v);
  const Vector vDot = col.kernel.solve(rhs);
  return -2.0 * C * (basisDot * col.v + basis * vDot);
}

BoxColumn solveInnerBoxQP(const Matrix& basis, const Vector& y, double C, double epsilon,
                          double tol, int maxSweeps, const Vector* warm) {
  const Index n = y.size();
  if (basis.rows() != n) throw InputError("solveInnerBoxQP: basis/y size mismatch");
  BoxColumn col;
  col.z = Vector::Zero(n);
  if (warm != nullptr && warm->size() == n) {
    col.z = warm->cwiseMax(-C).cwiseMin(C);
  }
  const Vector rowNorms = basis.rowwise().squaredNorm();
  const double stop = tol * std::max(1.0, C);
  col.converged = (n == 0);
  for (int sweep = 0; sweep < maxSweeps && n > 0; ++sweep) {
    Vector a = basis.transpose() * col.z;
    double change = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double q = rowNorms(i);
      const double old = col.z(i);
      double next;
      if (q == 0.0) {
        next = std::abs(y(i)) > epsilon ? C * sign(y(i)) : 0.0;
      } else {
        const double t = y(i) - basis.row(i).dot(a) + q * old;
        next = clip(softThreshold(t, epsilon) / q, -C, C);
      }
      if (next != old) {
        a.noalias() += (next - old) * basis.row(i).transpose();
        col.z(i) = next;
        change = std::max(change, std::abs(next - old));
      }
    }
    col.sweeps = sweep + 1;
    col.lastChange = change;
    if (change <= stop) {
      col.converged = true;
      break;
    }
  }
  col.v = basis.transpose() * col.z;
  col.value = y.dot(col.z) - epsilon * col.z.lpNorm<1>() - 0.5 * col.v.squaredNorm();
  return col;
}

BoxColumn solveInnerL1(const Matrix& u, std::span<const Index> index, const Vector& y,
                       const RegularizationParams& params, const Vector* warm) {
  return solveInnerBoxQP(gatherRows(u, index), y, params.C, 0.0, params.innerTol,
                         params.innerMaxIters, warm);
}

BoxColumn solveInnerEpsSVR(const Matrix& u, std::span<const Index> index, const Vector& y,
                           const RegularizationParams& params, const Vector* warm) {
  return solveInnerBoxQP(gatherRows(u, index), y, params.C, params.epsilon, params.innerTol,
                         params.innerMaxIters, warm);
}

Vector boxDerivative(const Matrix& basis, const Matrix& basisDot, const BoxColumn& col,
                     double C, double epsilon) {
  const Index n = col.z.size();
  Vector zDot = Vector::Zero(n);
  if (n == 0) return zDot;
  const double edge = C * (1.0 - 1e-12);
  std::vector<Index> free;
  for (Index i = 0; i < n; ++i) {
    const double a = std::abs(col.z(i));
    if (a < edge && (epsilon == 0.0 || a > 0.0)) free.push_back(i);
  }
  if (free.empty()) return zDot;
  const Index f = static_cast<Index>(free.size());
  Matrix bf(f, basis.cols());
  Matrix bdf(f, basis.cols());
  for (Index k = 0; k < f; ++k) {
    bf.row(k) = basis.row(free[k]);
    bdf.row(k) = basisDot.row(free[k]);
  }
  // Free-coordinate stationarity y_F - eps*sign(z_F) - B_F B^T z = 0, differentiated.
  const Vector rhs = -(bdf * col.v + bf * (basisDot.transpose() * col.z));
  const Vector x = minNormSolve(bf * bf.transpose(), rhs);
  for (Index k = 0; k < f; ++k) zDot(free[k]) = x(k);
  return zDot;
}

NonnegColumn solveInnerNonneg(const Matrix& u, std::span<const Index> index, const Vector& y,
                              const RegularizationParams& params, const Vector* warmS) {
  const Index d = u.rows();
  const double C = params.C;
  const double eps = 1.0 / (2.0 * C);
  const Matrix basis = gatherRows(u, index);
  if (basis.rows() != y.size()) throw InputError("solveInnerNonneg: index/y size mismatch");

  NonnegColumn col;
  col.kernel = woodburyKernel(basis, C);
  const Vector bty = basis.transpose() * y;

  // Lipschitz constant of the s-gradient: lambda_max(U Q U^T), Q = eps K^{-1}.
  double lipschitz;
  {
    const Matrix q = eps * col.kernel.solve(Matrix::Identity(u.cols(), u.cols()));
    const Matrix m = q * (u.transpose() * u);
    Eigen::EigenSolver<Matrix> es(m, false);
    lipschitz = std::max(es.eigenvalues().real().maxCoeff(), 1e-300);
  }
  const double safeStep = 1.0 / lipschitz;

  struct State {
    Vector s, v, w, z;
    double value;
  };
  auto evaluate = [&](Vector s) {
    State st;
    st.s = std::move(s);
    st.v = col.kernel.solve(bty + eps * (u.transpose() * st.s));
    st.w = u * st.v;
    st.z = 2.0 * C * (y - basis * st.v);
    st.value = y.dot(st.z) - 0.5 * eps * st.z.squaredNorm() - 0.5 * st.v.squaredNorm();
    return st;
  };
  auto residual = [](const State& st) {
    double r = 0.0;
    for (Index i = 0; i < st.s.size(); ++i) r = std::max(r, std::abs(std::min(st.s(i), st.w(i))));
    return r;
  };

  Vector s0 = Vector::Zero(d);
  if (warmS != nullptr && warmS->size() == d) s0 = warmS->cwiseMax(0.0);
  State cur = evaluate(std::move(s0));
  double res = residual(cur);
  double step = safeStep;
  int it = 0;
  bool converged = res <= params.innerTol;
  while (!converged && it < params.innerMaxIters) {
    ++it;
    State next = evaluate((cur.s - step * cur.w).cwiseMax(0.0));
    if (next.value < cur.value && step != safeStep) {
      next = evaluate((cur.s - safeStep * cur.w).cwiseMax(0.0));
    }
    const Vector ds = next.s - cur.s;
    const double curvature = ds.dot(next.w - cur.w);
    step = curvature > 0.0 ? ds.squaredNorm() / curvature : safeStep;
    if (!std::isfinite(step) || step <= 0.0) step = safeStep;
    cur = std::move(next);
    res = residual(cur);
    converged = res <= params.innerTol;
  }

  col.s = std::move(cur.s);
  col.v = std::move(cur.v);
  col.z = std::move(cur.z);
  col.value = cur.value;
  col.residual = res;
  col.iterations = it;
  col.converged = converged;
  return col;
}

NonnegDerivative nonnegDerivative(const Matrix& u, const Matrix& v, std::span<const Index> index,
                                  const NonnegColumn& col, double C) {
  const double eps = 1.0 / (2.0 * C);
  const Matrix basis = gatherRows(u, index);
  const Matrix basisDot = gatherRows(v, index);
  NonnegDerivative out;
  out.sDot = Vector::Zero(u.rows());

  // v-dot = K^{-1}(eps Bdot^T z - B^T Bdot v + eps V^T s) + Q U_F^T sdot_F.
  Vector rhs = eps * (v.transpose() * col.s);
  if (basis.rows() > 0) {
    rhs += eps * (basisDot.transpose() * col.z) - basis.transpose() * (basisDot * col.v);
  }
  Vector vDot = col.kernel.solve(rhs);

  std::vector<Index> free;
  for (Index i = 0; i < col.s.size(); ++i) {
    if (col.s(i) > 0.0) free.push_back(i);
  }
  if (!free.empty()) {
    const Index f = static_cast<Index>(free.size());
    Matrix uf(f, u.cols());
    Matrix vf(f, u.cols());
    for (Index k = 0; k < f; ++k) {
      uf.row(k) = u.row(free[k]);
      vf.row(k) = v.row(free[k]);
    }
    const Matrix q = eps * col.kernel.solve(Matrix::Identity(u.cols(), u.cols()));
    // Active rows of W stay at zero: V_F v + U_F v-dot = 0.
    const Vector sf = minNormSolve(uf * q * uf.transpose(), -(vf * col.v + uf * vDot));
    for (Index k = 0; k < f; ++k) out.sDot(free[k]) = sf(k);
    vDot += q * (uf.transpose() * sf);
  }
  if (basis.rows() > 0) {
    out.zDot = -2.0 * C * (basisDot * col.v + basis * vDot);
  } else {
    out.zDot = Vector(0);
  }
  return out;
}

Vector antiDiagonalSums(const Matrix& s) {
  const Index d = s.rows();
  const Index T = s.cols();
  Vector out = Vector::Zero(std::max<Index>(d + T - 1, 0));
  for (Index t = 0; t < T; ++t) {
    for (Index i = 0; i < d; ++i) out(i + t) += s(i, t);
  }
  return out;
}

Matrix spreadAntiDiagonals(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows + cols - 1) throw InputError("spreadAntiDiagonals: length must be d + T - 1");
  Matrix out(rows, cols);
  for (Index t = 0; t < cols; ++t) {
    for (Index i = 0; i < rows; ++i) out(i, t) = v(i + t);
  }
  return out;
}

Vector antiDiagonalMeans(const Matrix& w) {
  const Index d = w.rows();
  const Index T = w.cols();
  Vector sums = antiDiagonalSums(w);
  for (Index k = 0; k < sums.size(); ++k) {
    const Index len = std::min({k + 1, d, T, d + T - 1 - k});
    sums(k) /= static_cast<double>(len);
  }
  return sums;
}

namespace {

// Applies spread(A(S))/(2C) + U U^T S.
Matrix hankelNormalOp(const Matrix& u, const Matrix& s, double eps) {
  Matrix out = u * (u.transpose() * s);
  const Vector sums = antiDiagonalSums(s);
  for (Index t = 0; t < s.cols(); ++t) {
    for (Index i = 0; i < s.rows(); ++i) out(i, t) += eps * sums(i + t);
  }
  return out;
}

struct CgOutcome {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

CgOutcome conjugateGradient(const Matrix& u, const Matrix& rhs, Matrix& x, double eps,
                            double absTol, int maxIters) {
  CgOutcome out;
  Matrix r = rhs - hankelNormalOp(u, x, eps);
  double rr = r.squaredNorm();
  out.residual = std::sqrt(rr);
  if (out.residual <= absTol) {
    out.converged = true;
    return out;
  }
  Matrix p = r;
  for (int it = 1; it <= maxIters; ++it) {
    const Matrix ap = hankelNormalOp(u, p, eps);
    const double pap = frobeniusInner(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    x.noalias() += alpha * p;
    if (it % 50 == 0) {
      r = rhs - hankelNormalOp(u, x, eps);
    } else {
      r.noalias() -= alpha * ap;
    }
    const double rrNew = r.squaredNorm();
    out.iterations = it;
    out.residual = std::sqrt(rrNew);
    if (out.residual <= absTol) {
      out.converged = true;
      break;
    }
    p = r + (rrNew / rr) * p;
    rr = rrNew;
  }
  return out;
}

}  // namespace

HankelSolution solveInnerHankel(const Matrix& u, const Vector& y, Index rows, Index cols,
                                const RegularizationParams& params, const Matrix* warmS) {
  if (y.size() != rows + cols - 1) {
    std::ostringstream os;
    os << "solveInnerHankel: y has length " << y.size() << ", expected d + T - 1 = "
       << rows + cols - 1;
    throw InputError(os.str());
  }
  if (u.rows() != rows) throw InputError("solveInnerHankel: U row count must equal d");
  const double eps = 1.0 / (2.0 * params.C);
  HankelSolution sol;
  sol.S = Matrix::Zero(rows, cols);
  if (warmS != nullptr && warmS->rows() == rows && warmS->cols() == cols) sol.S = *warmS;
  const Matrix rhs = spreadAntiDiagonals(y, rows, cols);
  const double absTol = params.innerTol * y.norm();

  CgOutcome first = conjugateGradient(u, rhs, sol.S, eps, absTol, params.innerMaxIters);
  sol.iterations = first.iterations;
  sol.converged = first.converged;
  sol.residual = first.residual;
  if (!sol.converged) {
    CgOutcome second = conjugateGradient(u, rhs, sol.S, eps, absTol, params.innerMaxIters);
    sol.iterations += second.iterations;
    sol.converged = second.converged;
    sol.residual = second.residual;
  }
  sol.z = antiDiagonalSums(sol.S);
  sol.value = sol.z.dot(y) - 0.5 * eps * sol.z.squaredNorm() -
              0.5 * (u.transpose() * sol.S).squaredNorm();
  return sol;
}

Matrix hankelDerivative(const Matrix& u, const Matrix& v, const Matrix& s,
                        const RegularizationParams& params, int* iterations) {
  const double eps = 1.0 / (2.0 * params.C);
  const Matrix rhs = -(v * (u.transpose() * s) + u * (v.transpose() * s));
  Matrix x = Matrix::Zero(s.rows(), s.cols());
  const double absTol = params.innerTol * std::max(rhs.norm(), 1e-300);
  CgOutcome out = conjugateGradient(u, rhs, x, eps, absTol, params.innerMaxIters);
  if (iterations != nullptr) *iterations = out.iterations;
  return x;
}

Matrix eucGradient(const ManifoldPoint& u, const CompositeDual& m) {
  return -m.times(m.transposeTimes(u.matrix()));
}

Matrix eucGradient(const ManifoldPoint& u, const DualCertificate& cert) {
  return eucGradient(u, cert.m);
}

Matrix assembleHessVec(const ManifoldPoint& u, const Matrix& v, const CompositeDual& m,
                       const CompositeDual& mDot) {
  const Matrix& U = u.matrix();
  const Matrix mtu = m.transposeTimes(U);
  const Matrix inner = mDot.transposeTimes(U) + m.transposeTimes(v);
  return -(mDot.times(mtu) + m.times(inner));
}

}  // namespace spectra_lr
