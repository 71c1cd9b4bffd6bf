#include <spectra_lr/datasets.hpp>
#include <spectra_lr/problems.hpp>
#include <spectra_lr/solvers.hpp>
#include <spectra_lr/spectrahedron.hpp>

#include <benchmark/benchmark.h>

#include <memory>

using namespace spectra_lr;

namespace {

ColumnSparseMatrix completionData(Index d, Index T, double frac) {
  CompletionSynthSpec spec;
  spec.d = d;
  spec.T = T;
  spec.r = 5;
  spec.sampleFraction = frac;
  spec.noiseSigma = 0.01;
  return synthCompletion(spec, 11).train;
}

std::unique_ptr<ProblemAdapter> makeProblem(ProblemKind kind, Index d) {
  RegularizationParams p;
  p.C = 10.0;
  switch (kind) {
    case ProblemKind::hankel: {
      LTISystemSpec spec;
      spec.d = d;
      spec.T = d;
      const SynthHankel sig = synthHankel(spec, 11);
      return std::make_unique<HankelProblem>(HankelProblemData::make(sig.yNoisy, d, d), p);
    }
    case ProblemKind::mtfl: {
      MTFLSynthSpec spec;
      spec.d = d;
      spec.tasks = d;
      return std::make_unique<MTFLProblem>(synthMTFL(spec, 11).train, p);
    }
    default:
      return makeCompletionAdapter(kind, completionData(d, 2 * d, 0.2), p);
  }
}

void evaluateG(benchmark::State& state, ProblemKind kind) {
  const Index d = state.range(0);
  const auto problem = makeProblem(kind, d);
  const ManifoldPoint u = initializePoint(*problem, problem->rows(), 5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(problem->evaluate(u).value);
}

void gradient(benchmark::State& state, ProblemKind kind) {
  const auto problem = makeProblem(kind, state.range(0));
  const ManifoldPoint u = initializePoint(*problem, problem->rows(), 5, 1);
  const Evaluation ev = problem->evaluate(u);
  for (auto _ : state) benchmark::DoNotOptimize(problem->euclideanGradient(u, ev));
}

void hessVec(benchmark::State& state) {
  const auto problem = makeProblem(ProblemKind::completion, state.range(0));
  const ManifoldPoint u = initializePoint(*problem, problem->rows(), 5, 1);
  const Evaluation ev = problem->evaluate(u);
  const Matrix v = Matrix::Ones(u.matrix().rows(), u.matrix().cols());
  for (auto _ : state) benchmark::DoNotOptimize(problem->euclideanHessVec(u, v, ev));
}

void solveCompletion(benchmark::State& state, bool trustRegion) {
  const auto problem = makeProblem(ProblemKind::completion, state.range(0));
  const ManifoldPoint u0 = initializePoint(*problem, problem->rows(), 5, 1);
  SolverConfig cfg;
  cfg.maxOuterIters = 20;
  for (auto _ : state) {
    const SolveResult res = trustRegion ? solveTR(*problem, u0, cfg) : solveCG(*problem, u0, cfg);
    benchmark::DoNotOptimize(res.eval.value);
  }
}

}  // namespace

BENCHMARK_CAPTURE(evaluateG, completion, ProblemKind::completion)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(evaluateG, robust_l1, ProblemKind::robustL1)->Arg(100);
BENCHMARK_CAPTURE(evaluateG, nonneg, ProblemKind::nonnegCompletion)->Arg(100);
BENCHMARK_CAPTURE(evaluateG, hankel, ProblemKind::hankel)->Arg(50);
BENCHMARK_CAPTURE(evaluateG, mtfl, ProblemKind::mtfl)->Arg(50);
BENCHMARK_CAPTURE(gradient, completion, ProblemKind::completion)->Arg(100)->Arg(400);
BENCHMARK(hessVec)->Arg(100)->Arg(400);
BENCHMARK_CAPTURE(solveCompletion, tr, true)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(solveCompletion, cg, false)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
