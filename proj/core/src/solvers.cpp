#include <spectra_lr/solvers.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace spectra_lr {

void SolverConfig::validate() const {
  std::ostringstream os;
  if (maxOuterIters < 0) {
    os << "maxOuterIters must be non-negative, got " << maxOuterIters;
  } else if (!(gradNormTol >= 0.0)) {
    os << "gradNormTol must be non-negative, got " << gradNormTol;
  } else if (!(armijoC1 > 0.0 && armijoC1 < 0.5)) {
    os << "armijoC1 must lie in (0, 0.5), got " << armijoC1;
  } else if (!(armijoBacktrack > 0.0 && armijoBacktrack < 1.0)) {
    os << "armijoBacktrack must lie in (0, 1), got " << armijoBacktrack;
  } else if (maxLineSearch < 1) {
    os << "maxLineSearch must be at least 1, got " << maxLineSearch;
  } else if (!(trInitialRadius > 0.0) || !(trMaxRadius >= trInitialRadius)) {
    os << "trust-region radii must satisfy 0 < initial <= max, got " << trInitialRadius << ", "
       << trMaxRadius;
  } else if (tcgMaxIters < 0) {
    os << "tcgMaxIters must be non-negative, got " << tcgMaxIters;
  } else if (!(tcgKappa > 0.0 && tcgKappa < 1.0) || !(tcgTheta > 0.0)) {
    os << "tCG parameters need 0 < kappa < 1 and theta > 0";
  } else if (certEvery < 0) {
    os << "certEvery must be non-negative, got " << certEvery;
  } else if (!(gapTol >= 0.0)) {
    os << "gapTol must be non-negative, got " << gapTol;
  } else {
    return;
  }
  throw InputError(os.str());
}

const char* toString(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::stalled: return "stalled";
    case SolveStatus::maxIterations: return "max-iterations";
  }
  return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

struct State {
  ManifoldPoint u;
  Evaluation ev;
  Matrix egrad;
  TangentVector grad;
  double gradNorm;
};

State makeState(const ProblemAdapter& problem, ManifoldPoint u, Evaluation ev) {
  Matrix egrad = problem.euclideanGradient(u, ev);
  TangentVector grad = riemannianGradient(u, egrad);
  const double gn = grad.norm();
  return State{std::move(u), std::move(ev), std::move(egrad), std::move(grad), gn};
}

State evaluateState(const ProblemAdapter& problem, ManifoldPoint u, const DualCertificate* warm) {
  Evaluation ev = problem.evaluate(u, warm);
  return makeState(problem, std::move(u), std::move(ev));
}

class Monitor {
 public:
  Monitor(const ProblemAdapter& problem, const SolverConfig& cfg, const IterationCallback& cb)
      : problem_(problem), cfg_(cfg), cb_(cb), start_(Clock::now()) {}

  void setReference(double gradNorm0) {
    tol_ = cfg_.relativeGradTol ? cfg_.gradNormTol * gradNorm0 : cfg_.gradNormTol;
  }
  bool gradientConverged(const State& s) const { return s.gradNorm <= tol_; }

  /// Appends a record; returns true when a certificate met gapTol.
  bool record(int iter, const State& s, double step) {
    IterationRecord rec;
    rec.iter = iter;
    rec.gValue = s.ev.value;
    rec.gradNorm = s.gradNorm;
    rec.stepSize = step;
    rec.elapsedSeconds = std::chrono::duration<double>(Clock::now() - start_).count();
    bool gapMet = false;
    if (cfg_.certEvery > 0 && iter % cfg_.certEvery == 0) {
      const GapReport gap = dualityGap(s.u, s.ev.cert, s.ev.value);
      rec.dualityGap = gap.gap;
      gapMet = cfg_.gapTol > 0.0 && gap.relativeGap <= cfg_.gapTol;
    }
    trace_.push_back(rec);
    if (cb_) cb_(rec);
    return gapMet;
  }

  SolveResult finish(State s, SolveStatus status, int iterations) {
    SolveResult res{std::move(s.u), std::move(s.ev), std::move(trace_), status, iterations,
                    s.gradNorm, {}};
    res.gap = dualityGap(res.u, res.eval.cert, res.eval.value);
    (void)problem_;
    return res;
  }

 private:
  const ProblemAdapter& problem_;
  const SolverConfig& cfg_;
  const IterationCallback& cb_;
  Clock::time_point start_;
  double tol_ = 0.0;
  std::vector<IterationRecord> trace_;
};

/// Absolute resolution of a computed g value.
double roundoffLevel(double g) {
  return 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(g));
}

struct LineSearchOutcome {
  bool accepted = false;
  double alpha = 0.0;
  std::optional<Evaluation> ev;
  std::optional<ManifoldPoint> u;
};

LineSearchOutcome armijo(const ProblemAdapter& problem, const State& s, const TangentVector& dir,
                         double slope, double alpha0, const SolverConfig& cfg) {
  LineSearchOutcome out;
  const double noise = roundoffLevel(s.ev.value);
  double alpha = alpha0;
  for (int j = 0; j < cfg.maxLineSearch; ++j) {
    ManifoldPoint cand = retract(s.u, dir, alpha);
    Evaluation ev = problem.evaluate(cand, &s.ev.cert);
    bool ok = false;
    if (std::isfinite(ev.value)) {
      const double decrease = s.ev.value - ev.value;
      if (decrease > noise) {
        ok = decrease >= -cfg.armijoC1 * alpha * slope;
      } else if (std::abs(decrease) <= noise) {
        // g cannot resolve the decrease; use the approximate Armijo test
        // phi'(alpha) <= (2 c1 - 1) phi'(0) on the slope instead.
        const TangentVector gradCand = riemannianGradient(cand, problem.euclideanGradient(cand, ev));
        const double slopeCand = innerProduct(gradCand, transport(cand, dir));
        ok = slopeCand <= (2.0 * cfg.armijoC1 - 1.0) * slope && alpha * dir.norm() > 1e-15;
      }
    }
    if (ok) {
      out.accepted = true;
      out.alpha = alpha;
      out.ev = std::move(ev);
      out.u = std::move(cand);
      return out;
    }
    alpha *= cfg.armijoBacktrack;
  }
  return out;
}

}  // namespace

SolveResult solveCG(const ProblemAdapter& problem, const ManifoldPoint& u0, const SolverConfig& cfg,
                    const IterationCallback& onIter) {
  cfg.validate();
  Monitor mon(problem, cfg, onIter);
  State s = evaluateState(problem, u0, nullptr);
  mon.setReference(s.gradNorm);
  if (mon.record(0, s, 0.0) || mon.gradientConverged(s)) {
    return mon.finish(std::move(s), SolveStatus::converged, 0);
  }

  TangentVector dir = -1.0 * s.grad;
  double prevAlpha = 0.0;
  for (int k = 1; k <= cfg.maxOuterIters; ++k) {
    double slope = innerProduct(s.grad, dir);
    bool steepest = false;
    if (!(slope < 0.0)) {
      dir = -1.0 * s.grad;
      slope = -s.gradNorm * s.gradNorm;
      steepest = true;
    }
    const double alpha0 = prevAlpha > 0.0 ? 2.0 * prevAlpha : 1.0 / dir.norm();
    LineSearchOutcome ls = armijo(problem, s, dir, slope, alpha0, cfg);
    if (!ls.accepted && !steepest) {
      dir = -1.0 * s.grad;
      slope = -s.gradNorm * s.gradNorm;
      ls = armijo(problem, s, dir, slope, 1.0 / dir.norm(), cfg);
    }
    if (!ls.accepted) {
      return mon.finish(std::move(s), SolveStatus::stalled, k - 1);
    }
    prevAlpha = ls.alpha;
    const double stepNorm = ls.alpha * dir.norm();
    State next = makeState(problem, std::move(*ls.u), std::move(*ls.ev));

    // Polak-Ribiere+ with projection transport.
    const TangentVector gOld = transport(next.u, s.grad);
    const double beta =
        std::max(0.0, (next.gradNorm * next.gradNorm - innerProduct(next.grad, gOld)) /
                          (s.gradNorm * s.gradNorm));
    dir = TangentVector::axpy(beta, transport(next.u, dir), -1.0 * next.grad);
    s = std::move(next);

    const bool gapMet = mon.record(k, s, stepNorm);
    if (gapMet || mon.gradientConverged(s)) {
      return mon.finish(std::move(s), SolveStatus::converged, k);
    }
  }
  return mon.finish(std::move(s), SolveStatus::maxIterations, cfg.maxOuterIters);
}

namespace {

struct TcgOutcome {
  TangentVector eta;
  TangentVector hessEta;
  bool boundary = false;
};

/// Steihaug-Toint truncated CG on the model <g, eta> + <eta, H eta>/2.
template <class Hess>
TcgOutcome truncatedCG(const State& s, const Hess& hess, double radius, const SolverConfig& cfg) {
  const ManifoldPoint& u = s.u;
  TcgOutcome out{TangentVector::zero(u), TangentVector::zero(u), false};
  const double gn = s.gradNorm;
  if (cfg.tcgMaxIters == 0) {
    const TangentVector hg = hess(s.grad);
    const double ghg = innerProduct(s.grad, hg);
    double tau = 1.0;
    if (ghg > 0.0) tau = std::min(gn * gn * gn / (radius * ghg), 1.0);
    const double scale = -tau * radius / gn;
    out.eta = scale * s.grad;
    out.hessEta = scale * hg;
    out.boundary = tau == 1.0;
    return out;
  }
  TangentVector r = s.grad;
  TangentVector delta = -1.0 * r;
  double rr = gn * gn;
  const double stop = gn * std::min(std::pow(gn, cfg.tcgTheta), cfg.tcgKappa);
  for (int j = 0; j < cfg.tcgMaxIters; ++j) {
    const TangentVector hd = hess(delta);
    const double dhd = innerProduct(delta, hd);
    const double alpha = rr / dhd;
    const TangentVector trial = TangentVector::axpy(alpha, delta, out.eta);
    if (!(dhd > 0.0) || trial.norm() >= radius) {
      // Step to the boundary along delta.
      const double ed = innerProduct(out.eta, delta);
      const double dd = innerProduct(delta, delta);
      const double ee = innerProduct(out.eta, out.eta);
      const double tau = (-ed + std::sqrt(ed * ed + dd * (radius * radius - ee))) / dd;
      out.eta = TangentVector::axpy(tau, delta, out.eta);
      out.hessEta = TangentVector::axpy(tau, hd, out.hessEta);
      out.boundary = true;
      return out;
    }
    out.eta = trial;
    out.hessEta = TangentVector::axpy(alpha, hd, out.hessEta);
    r = TangentVector::axpy(alpha, hd, r);
    const double rrNew = innerProduct(r, r);
    if (std::sqrt(rrNew) <= stop) break;
    delta = TangentVector::axpy(rrNew / rr, delta, -1.0 * r);
    rr = rrNew;
  }
  return out;
}

}  // namespace

SolveResult solveTR(const ProblemAdapter& problem, const ManifoldPoint& u0, const SolverConfig& cfg,
                    const IterationCallback& onIter) {
  cfg.validate();
  Monitor mon(problem, cfg, onIter);
  State s = evaluateState(problem, u0, nullptr);
  mon.setReference(s.gradNorm);
  if (mon.record(0, s, 0.0) || mon.gradientConverged(s)) {
    return mon.finish(std::move(s), SolveStatus::converged, 0);
  }

  double radius = cfg.trInitialRadius;
  constexpr double kAccept = 0.1;
  for (int k = 1; k <= cfg.maxOuterIters; ++k) {
    auto hess = [&](const TangentVector& xi) {
      const Matrix h = problem.euclideanHessVec(s.u, xi.matrix(), s.ev);
      if (!h.allFinite()) throw GeometryError("non-finite Hessian-vector product");
      return riemannianHessVec(s.u, s.egrad, h, xi);
    };

    std::optional<TcgOutcome> tcg;
    try {
      tcg = truncatedCG(s, hess, radius, cfg);
    } catch (const std::exception&) {
      tcg.reset();
    }

    double step = 0.0;
    if (!tcg) {
      // Hessian unavailable here: take a gradient step with Armijo backtracking.
      const TangentVector dir = -1.0 * s.grad;
      LineSearchOutcome ls =
          armijo(problem, s, dir, -s.gradNorm * s.gradNorm, std::min(radius, 1.0) / s.gradNorm, cfg);
      if (!ls.accepted) return mon.finish(std::move(s), SolveStatus::stalled, k - 1);
      step = ls.alpha * s.gradNorm;
      s = makeState(problem, std::move(*ls.u), std::move(*ls.ev));
    } else {
      const double modelDecrease =
          -(innerProduct(s.grad, tcg->eta) + 0.5 * innerProduct(tcg->eta, tcg->hessEta));
      ManifoldPoint cand = retract(s.u, tcg->eta);
      Evaluation ev = problem.evaluate(cand, &s.ev.cert);
      const double reg = roundoffLevel(s.ev.value);
      const double rho = (s.ev.value - ev.value + reg) / (modelDecrease + reg);
      const double etaNorm = tcg->eta.norm();
      if (!std::isfinite(rho) || rho < 0.25) {
        radius *= 0.25;
      } else if (rho > 0.75 && tcg->boundary) {
        radius = std::min(2.0 * radius, cfg.trMaxRadius);
      }
      if (std::isfinite(rho) && rho > kAccept && modelDecrease > 0.0) {
        step = etaNorm;
        s = makeState(problem, std::move(cand), std::move(ev));
      } else if (radius < 1e-14) {
        return mon.finish(std::move(s), SolveStatus::stalled, k);
      }
    }

    const bool gapMet = mon.record(k, s, step);
    if (gapMet || mon.gradientConverged(s)) {
      return mon.finish(std::move(s), SolveStatus::converged, k);
    }
  }
  return mon.finish(std::move(s), SolveStatus::maxIterations, cfg.maxOuterIters);
}

namespace {

Matrix seededGaussian(Index d, Index r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(d, r);
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < d; ++i) m(i, j) = normal(rng);
  }
  return m;
}

Matrix orthonormalize(const Matrix& x) {
  Eigen::HouseholderQR<Matrix> qr(x);
  return qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
}

}  // namespace

ManifoldPoint initializePoint(const ProblemAdapter& problem, Index d, Index r, std::uint64_t seed) {
  if (d != problem.rows()) {
    std::ostringstream os;
    os << "initializePoint: d = " << d << " but the problem has " << problem.rows() << " rows";
    throw InputError(os.str());
  }
  if (r < 1 || r > d) {
    std::ostringstream os;
    os << "rank must satisfy 1 <= r <= d = " << d << ", got " << r;
    throw InputError(os.str());
  }
  auto gram = [&](const Matrix& x) { return problem.dataMatrixTimes(problem.dataMatrixTransposeTimes(x)); };

  Matrix q;
  double top = 0.0;
  if (d <= 2000) {
    const Matrix g = gram(Matrix::Identity(d, d));
    const Matrix sym = 0.5 * (g + g.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    top = eig.eigenvalues().size() > 0 ? eig.eigenvalues()(d - 1) : 0.0;
    q = eig.eigenvectors().rightCols(r).rowwise().reverse();
  } else {
    Matrix x = orthonormalize(seededGaussian(d, r, seed));
    for (int it = 0; it < 60; ++it) x = orthonormalize(gram(x));
    const Matrix small = x.transpose() * gram(x);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (small + small.transpose()));
    top = eig.eigenvalues()(r - 1);
    q = x * eig.eigenvectors().rowwise().reverse();
  }
  if (!(top > 0.0)) {
    return ManifoldPoint::normalized(seededGaussian(d, r, seed));
  }
  for (Index j = 0; j < r; ++j) {
    Index imax = 0;
    q.col(j).cwiseAbs().maxCoeff(&imax);
    if (q(imax, j) < 0.0) q.col(j) *= -1.0;
  }
  return ManifoldPoint::normalized(q / std::sqrt(static_cast<double>(r)));
}

}  // namespace spectra_lr
