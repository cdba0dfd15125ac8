#include <random>
#include <string>

#include <benchmark/benchmark.h>

#include "apfopf/dcflow.hpp"
#include "apfopf/formulation.hpp"
#include "apfopf/ipm.hpp"
#include "apfopf/kernels.hpp"
#include "apfopf/netmodel.hpp"

namespace {

using namespace apfopf;

NetworkCase load(const std::string& name) {
  return prepare_case(load_matpower_file(std::string(APFOPF_DATA_DIR) + "/" + name + ".m"));
}

const char* kCases[] = {"case9", "case30", "case57", "case118", "case300"};

void BM_KernelTrig(benchmark::State& state) {
  double d = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_trig(d));
    d = d < 3.0 ? d + 1e-3 : -3.0;
  }
}
BENCHMARK(BM_KernelTrig);

void BM_KernelAllpass(benchmark::State& state) {
  double d = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_allpass(d, KernelParam{0.5}));
    d = d < 3.0 ? d + 1e-3 : -3.0;
  }
}
BENCHMARK(BM_KernelAllpass);

void BM_Evaluate(benchmark::State& state, FlowVariant variant) {
  const NetworkCase net = load(kCases[state.range(0)]);
  const AdmittanceModel adm = build_admittance(net);
  const DcSolution dc = solve_dc_pf(net);
  const FlowMode mode = variant == FlowVariant::TRIG ? FlowMode::trig() : FlowMode::allpass(rotation_refs(dc, net, adm), {});
  const OpfProblem problem = assemble(net, adm, mode);
  const Eigen::VectorXd x = problem.initial_point(&dc);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Ones(problem.num_eq());
  const Eigen::VectorXd nu = Eigen::VectorXd::Ones(problem.num_ineq());
  EvalBundle b;
  for (auto _ : state) {
    problem.eval(x, 1.0, lambda, nu, b);
    benchmark::DoNotOptimize(b.f);
  }
  state.SetLabel(kCases[state.range(0)]);
}
BENCHMARK_CAPTURE(BM_Evaluate, trig, FlowVariant::TRIG)->DenseRange(0, 4);
BENCHMARK_CAPTURE(BM_Evaluate, allpass, FlowVariant::ALLPASS)->DenseRange(0, 4);

void BM_Solve(benchmark::State& state, FlowVariant variant) {
  const NetworkCase net = load(kCases[state.range(0)]);
  const AdmittanceModel adm = build_admittance(net);
  const DcSolution dc = solve_dc_pf(net);
  const FlowMode mode = variant == FlowVariant::TRIG ? FlowMode::trig() : FlowMode::allpass(rotation_refs(dc, net, adm), {});
  const OpfProblem problem = assemble(net, adm, mode);
  const Eigen::VectorXd x0 = problem.initial_point(&dc);
  int iterations = 0;
  for (auto _ : state) {
    const SolveResult r = solve(problem, IpmOptions{}, x0);
    iterations = r.iterations;
  }
  state.counters["iterations"] = iterations;
  state.SetLabel(kCases[state.range(0)]);
}
BENCHMARK_CAPTURE(BM_Solve, trig, FlowVariant::TRIG)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Solve, allpass, FlowVariant::ALLPASS)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
