#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include <doctest.h>

#include <Eigen/Dense>

#include "apfopf/error.hpp"
#include "apfopf/formulation.hpp"
#include "fd.hpp"
#include "support.hpp"

using namespace apfopf;
using namespace testsupport;

namespace {

bool same_pattern(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.nonZeros() != b.nonZeros()) return false;
  for (int k = 0; k < a.outerSize(); ++k) {
    SparseMatrix::InnerIterator ia(a, k), ib(b, k);
    for (; ia && ib; ++ia, ++ib) {
      if (ia.index() != ib.index()) return false;
    }
    if (ia || ib) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("case9 constraint counts") {
  for (auto v : {FlowVariant::TRIG, FlowVariant::ALLPASS}) {
    const auto bp = build("case9", v);
    CHECK(bp.problem.num_eq() == 18);
    CHECK(bp.problem.num_ineq() == 18);
    CHECK(bp.problem.num_vars() == 8 + 9 + 3 + 3);
    int from = 0, to = 0;
    for (const auto& info : bp.problem.ineq_info()) {
      from += info.kind == IneqKind::FLOW_FROM;
      to += info.kind == IneqKind::FLOW_TO;
    }
    CHECK(from == 9);
    CHECK(to == 9);
  }
}

TEST_CASE("zero angle bounds emit no angle inequality, finite ones do") {
  const std::string text =
      mini_case("1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n2 1 10 0 0 0 1 1 0 100 1 1.1 0.9;\n",
                "1 10 0 100 -100 1 100 1 300 0 0 0 0 0 0 0 0 0 0 0 0;\n",
                "1 2 0 0.1 0 0 0 0 0 0 1 0 0;\n1 2 0 0.1 0 0 0 0 0 0 1 -30 30;\n", "2 0 0 3 0.01 10 0;\n");
  const NetworkCase net = prepare_case(parse_matpower_case(text));
  const OpfProblem p = assemble(net, build_admittance(net), FlowMode::trig());
  REQUIRE(p.num_ineq() == 2);
  CHECK(p.ineq_info()[0].kind == IneqKind::ANGLE_MAX);
  CHECK(p.ineq_info()[0].branch == 1);
  CHECK(p.ineq_info()[1].kind == IneqKind::ANGLE_MIN);
}

TEST_CASE("TRIG and ALLPASS share layout, bounds and sparsity") {
  for (const char* name : {"case9", "case30", "case118"}) {
    CAPTURE(name);
    const auto a = build(name, FlowVariant::TRIG);
    const auto b = build(name, FlowVariant::ALLPASS);
    CHECK(a.problem.num_vars() == b.problem.num_vars());
    CHECK(a.problem.num_eq() == b.problem.num_eq());
    CHECK(a.problem.num_ineq() == b.problem.num_ineq());
    CHECK(a.problem.lower() == b.problem.lower());
    CHECK(a.problem.upper() == b.problem.upper());
    std::mt19937_64 rng(3);
    const Eigen::VectorXd x = testsupport::random_point(a.problem, a.dc, rng);
    const Eigen::VectorXd lam = Eigen::VectorXd::Ones(a.problem.num_eq());
    const Eigen::VectorXd nu = Eigen::VectorXd::Ones(a.problem.num_ineq());
    EvalBundle ea, eb;
    a.problem.eval(x, 1.0, lam, nu, ea);
    b.problem.eval(x, 1.0, lam, nu, eb);
    CHECK(same_pattern(ea.jac_h, eb.jac_h));
    CHECK(same_pattern(ea.jac_g, eb.jac_g));
    CHECK(same_pattern(ea.hessian, eb.hessian));
  }
}

TEST_CASE("two-bus lossless line in TRIG mode") {
  const NetworkCase net = prepare_case(parse_matpower_case(mini_case(
      "1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n2 1 0 0 0 0 1 1 0 100 1 1.1 0.9;\n",
      "1 0 0 100 -100 1 100 1 300 0 0 0 0 0 0 0 0 0 0 0 0;\n", "1 2 0 0.1 0 200 0 0 0 0 1 -360 360;\n",
      "2 0 0 3 0.01 10 0;\n")));
  const OpfProblem p = assemble(net, build_admittance(net), FlowMode::trig());
  OpfSolution s;
  s.theta = Eigen::Vector2d(0.1, 0.0);
  s.vm = Eigen::Vector2d(1.0, 1.0);
  s.pg = Eigen::VectorXd::Zero(1);
  s.qg = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd x = p.pack(s);
  const Eigen::VectorXd h = h_of(p, x);
  const double pf = 10.0 * std::sin(0.1);
  CHECK(std::abs(h[0] + pf) < 1e-12);
  CHECK(std::abs(h[1] - pf) < 1e-12);
  CHECK(std::abs(pf - 0.99833) < 1e-5);
  const double qf = 10.0 * (1.0 - std::cos(0.1));
  const Eigen::VectorXd g = g_of(p, x);
  CHECK(std::abs(g[0] - (pf * pf + qf * qf - 4.0)) < 1e-12);
}

TEST_CASE("derivatives match central differences at 20 random points") {
  for (const char* name : {"case9", "case30"}) {
    for (auto v : {FlowVariant::TRIG, FlowVariant::ALLPASS}) {
      CAPTURE(name);
      CAPTURE(to_string(v));
      const DerivativeErrors e = derivative_errors(build(name, v), 20, 11);
      CHECK(e.grad_f <= 1e-6);
      CHECK(e.jac_h <= 1e-6);
      CHECK(e.jac_g <= 1e-6);
      CHECK(e.hessian <= 1e-6);
    }
  }
}

TEST_CASE("ALLPASS equals TRIG at the pre-rotation point") {
  for (const char* name : {"case9", "case30", "case57", "case118", "case300"}) {
    CAPTURE(name);
    const auto a = build(name, FlowVariant::TRIG);
    const auto b = build(name, FlowVariant::ALLPASS);
    const Eigen::VectorXd x = b.problem.initial_point(&b.dc);
    const Eigen::VectorXd diff_h = h_of(a.problem, x) - h_of(b.problem, x);
    const Eigen::VectorXd diff_g = g_of(a.problem, x) - g_of(b.problem, x);
    CHECK(diff_h.lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(diff_g.lpNorm<Eigen::Infinity>() <= 1e-12);
    // no artificial loss: total injection identical
    CHECK(std::abs(h_of(a.problem, x).head(a.net.num_buses()).sum() -
                   h_of(b.problem, x).head(b.net.num_buses()).sum()) <= 1e-12);
  }
}

TEST_CASE("phase-shift symmetry by moving the reference bus") {
  for (auto v : {FlowVariant::TRIG, FlowVariant::ALLPASS}) {
    CAPTURE(to_string(v));
    const auto base = build("case30", v);
    std::mt19937_64 rng(5);
    const Eigen::VectorXd x = testsupport::random_point(base.problem, base.dc, rng);
    const OpfSolution s = base.problem.extract(x);

    NetworkCase moved = base.net;
    const int r2 = 17;
    moved.buses[base.problem.layout().ref].kind = BusKind::PV;
    moved.buses[r2].kind = BusKind::REF;
    DcSolution dc2 = base.dc;
    dc2.theta_dc.array() += 0.37;
    const AdmittanceModel adm2 = build_admittance(moved);
    const OpfProblem p2 = assemble(moved, adm2, v == FlowVariant::TRIG ? FlowMode::trig()
                                                                      : FlowMode::allpass(rotation_refs(dc2, moved, adm2)));
    OpfSolution s2 = s;
    s2.theta.array() -= s.theta[r2];
    const Eigen::VectorXd x2 = p2.pack(s2);
    CHECK((h_of(base.problem, x) - h_of(p2, x2)).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((g_of(base.problem, x) - g_of(p2, x2)).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("total TRIG injection equals series and shunt losses") {
  for (const char* name : {"case9", "case30"}) {
    CAPTURE(name);
    const auto bp = build(name, FlowVariant::TRIG);
    std::mt19937_64 rng(9);
    const Eigen::VectorXd x = testsupport::random_point(bp.problem, bp.dc, rng);
    const OpfSolution s = bp.problem.extract(x);
    const Eigen::VectorXd h = h_of(bp.problem, x);
    const int n = static_cast<int>(bp.net.num_buses());
    double injection = 0.0;
    for (int i = 0; i < n; ++i) injection -= h[i] + bp.net.buses[i].p_load;
    injection += s.pg.sum();
    double losses = 0.0;
    for (int i = 0; i < n; ++i) losses += bp.net.buses[i].g_shunt * s.vm[i] * s.vm[i];
    for (const auto& br : bp.net.branches) {
      const std::complex<double> vf = std::polar(s.vm[br.from], s.theta[br.from]);
      const std::complex<double> vt = std::polar(s.vm[br.to], s.theta[br.to]);
      const std::complex<double> i_series = (vf / std::polar(br.tap, br.shift) - vt) / std::complex<double>(br.r, br.x);
      losses += std::norm(i_series) * br.r;
    }
    CHECK(std::abs(injection - losses) <= 1e-8);
  }
  const NetworkCase lossless = prepare_case(parse_matpower_case(testsupport::two_bus(50.0)));
  const OpfProblem p = assemble(lossless, build_admittance(lossless), FlowMode::trig());
  std::mt19937_64 rng(1);
  DcSolution dc = zero_rotation(lossless);
  const Eigen::VectorXd x = testsupport::random_point(p, dc, rng);
  const Eigen::VectorXd h = h_of(p, x);
  const OpfSolution s = p.extract(x);
  CHECK(std::abs(s.pg.sum() - 0.5 - h.head(2).sum()) <= 1e-12);
}

TEST_CASE("initial point") {
  const auto bp = build("case9", FlowVariant::TRIG);
  const Eigen::VectorXd x = bp.problem.initial_point(&bp.dc);
  CHECK(((x - bp.problem.lower()).array() > 0.0).all());
  CHECK(((bp.problem.upper() - x).array() > 0.0).all());
  const Eigen::VectorXd flat = bp.problem.initial_point();
  const auto& lay = bp.problem.layout();
  for (int i = 0; i < lay.n_bus; ++i) {
    if (lay.theta(i) >= 0) CHECK(flat[lay.theta(i)] == 0.0);
    CHECK(flat[lay.v(i)] == 1.0);
  }

  NetworkCase pinned = bp.net;
  pinned.buses[3].v_min = 1.0;
  pinned.buses[3].v_max = 1.0;
  const OpfProblem p = assemble(pinned, build_admittance(pinned), FlowMode::trig());
  try {
    (void)p.initial_point();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Assembly);
    CHECK(std::string(e.what()).find("empty interior") != std::string::npos);
  }
}

TEST_CASE("assembly errors and helpers") {
  const auto bp = build("case9", FlowVariant::TRIG);
  FlowMode bad;
  bad.variant = FlowVariant::ALLPASS;
  CHECK_THROWS_AS(assemble(bp.net, bp.adm, bad), Error);
  RotationTable short_table = rotation_refs(bp.dc, bp.net, bp.adm);
  short_table.pair_refs.pop_back();
  CHECK_THROWS_AS(assemble(bp.net, bp.adm, FlowMode::allpass(short_table)), Error);

  std::mt19937_64 rng(2);
  const Eigen::VectorXd x = testsupport::random_point(bp.problem, bp.dc, rng);
  CHECK(bp.problem.pack(bp.problem.extract(x)) == x);
  std::ostringstream csv;
  bp.problem.write_constraint_csv(csv, x);
  CHECK(csv.str().rfind("kind,index,label,value\n", 0) == 0);
  CHECK(csv.str().find("ineq,17,flow_to_8_") != std::string::npos);

  Eigen::VectorXd nan_x = x;
  nan_x[0] = std::nan("");
  double f;
  Eigen::VectorXd h, g;
  CHECK_THROWS_AS(bp.problem.eval_values(nan_x, f, h, g), Error);
}
