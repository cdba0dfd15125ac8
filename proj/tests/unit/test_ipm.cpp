#include <cmath>
#include <limits>
#include <random>

#include <doctest.h>

#include <Eigen/Dense>

#include "apfopf/error.hpp"
#include "apfopf/ipm.hpp"
#include "qp.hpp"
#include "support.hpp"

using namespace apfopf;
using testsupport::DenseQp;
using testsupport::make_qp;

TEST_CASE("bound-only QP: min x^2, x >= 1") {
  DenseQp qp = make_qp(1);
  qp.Q(0, 0) = 2.0;
  qp.lo[0] = 1.0;
  IpmOptions opts;
  opts.bound_relax = 0.0;  // exact bounds so the active-set optimum is hit on the nose
  const SolveResult r = solve(qp, opts, Eigen::VectorXd::Constant(1, 3.0));
  REQUIRE(r.status == SolveStatus::OPTIMAL);
  CHECK(std::abs(r.x[0] - 1.0) <= 1e-8);
  CHECK(std::abs(r.objective - 1.0) <= 1e-8);
  CHECK(std::abs(r.z_lo[0] - 2.0) <= 1e-6);
}

TEST_CASE("equality QP: min (x-1)^2 + (y-2)^2, x + y = 1") {
  DenseQp qp = make_qp(2);
  qp.Q = 2.0 * Eigen::Matrix2d::Identity();
  qp.c = Eigen::Vector2d(-2.0, -4.0);
  qp.A = Eigen::RowVector2d(1.0, 1.0);
  qp.b = Eigen::VectorXd::Ones(1);
  const SolveResult r = solve(qp, IpmOptions{}, Eigen::Vector2d(5.0, -3.0));
  REQUIRE(r.status == SolveStatus::OPTIMAL);
  CHECK(std::abs(r.x[0]) <= 1e-8);
  CHECK(std::abs(r.x[1] - 1.0) <= 1e-8);
  CHECK(std::abs(r.lambda[0] - 2.0) <= 1e-8);
  CHECK(r.iterations <= 2);
}

TEST_CASE("one Newton step solves the equality QP exactly") {
  DenseQp qp = make_qp(2);
  qp.Q = 2.0 * Eigen::Matrix2d::Identity();
  qp.c = Eigen::Vector2d(-2.0, -4.0);
  qp.A = Eigen::RowVector2d(1.0, 1.0);
  qp.b = Eigen::VectorXd::Ones(1);
  IterateState st;
  st.x = Eigen::Vector2d(0.3, 0.7);
  st.lambda = Eigen::VectorXd::Zero(1);
  st.z_lo = st.z_hi = Eigen::VectorXd::Zero(2);
  const ScaledBounds bd{qp.lo, qp.hi, 1.0};
  EvalBundle b;
  qp.eval(st.x, 1.0, st.lambda, st.nu, b, true);
  KktSystem kkt;
  const Direction d = newton_step(qp, bd, st, b, 0.0, kkt, IpmOptions{});
  CHECK(std::abs(st.x[0] + d.dx[0]) < 1e-14);
  CHECK(std::abs(st.x[1] + d.dx[1] - 1.0) < 1e-14);
  CHECK(std::abs(d.dlambda[0] - 2.0) < 1e-14);
}

TEST_CASE("condensed Newton step solves the full primal-dual system") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6 + trial % 5, me = 2, mi = 3;
    DenseQp qp = make_qp(n);
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(n, n);
    qp.Q = m * m.transpose() + Eigen::MatrixXd::Identity(n, n);
    qp.c = Eigen::VectorXd::Random(n);
    qp.A = Eigen::MatrixXd::Random(me, n);
    qp.b = Eigen::VectorXd::Random(me);
    qp.G = Eigen::MatrixXd::Random(mi, n);
    qp.d = Eigen::VectorXd::Constant(mi, 5.0);
    qp.lo = Eigen::VectorXd::Constant(n, -2.0);
    qp.hi = Eigen::VectorXd::Constant(n, 2.0);
    qp.hi[0] = kInf;
    qp.lo[1] = -kInf;

    IterateState st;
    st.x = 0.5 * Eigen::VectorXd::Random(n);
    st.s = Eigen::VectorXd::Constant(mi, 0.5) + 0.4 * Eigen::VectorXd::Random(mi);
    st.lambda = Eigen::VectorXd::Random(me);
    st.nu = Eigen::VectorXd::Constant(mi, 0.7) + 0.3 * Eigen::VectorXd::Random(mi);
    st.z_lo = Eigen::VectorXd::Zero(n);
    st.z_hi = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(qp.lo[i])) st.z_lo[i] = 0.5 + 0.4 * u(rng);
      if (std::isfinite(qp.hi[i])) st.z_hi[i] = 0.5 + 0.4 * u(rng);
    }
    const double mu = 0.03;
    const double obj = 0.8;
    const ScaledBounds bd{qp.lo, qp.hi, obj};
    EvalBundle b;
    qp.eval(st.x, obj, st.lambda, st.nu, b, true);
    KktSystem kkt;
    const Direction d = newton_step(qp, bd, st, b, mu, kkt, IpmOptions{});
    REQUIRE(d.reg_primal == 0.0);

    // unknowns: dx, ds, dlambda, dnu, dz_lo, dz_hi
    const int N = n + mi + me + mi + 2 * n;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    const int ox = 0, os = n, ol = n + mi, on = n + mi + me, ozl = on + mi, ozh = ozl + n;
    const Eigen::MatrixXd W = obj * qp.Q;
    K.block(0, ox, n, n) = W;
    K.block(0, ol, n, me) = qp.A.transpose();
    K.block(0, on, n, mi) = qp.G.transpose();
    K.block(0, ozl, n, n) = -Eigen::MatrixXd::Identity(n, n);
    K.block(0, ozh, n, n) = Eigen::MatrixXd::Identity(n, n);
    rhs.segment(0, n) = -(obj * b.grad_f + qp.A.transpose() * st.lambda + qp.G.transpose() * st.nu - st.z_lo + st.z_hi);
    int row = n;
    K.block(row, ox, me, n) = qp.A;
    rhs.segment(row, me) = -b.h;
    row += me;
    K.block(row, ox, mi, n) = qp.G;
    K.block(row, os, mi, mi) = Eigen::MatrixXd::Identity(mi, mi);
    rhs.segment(row, mi) = -(b.g + st.s);
    row += mi;
    for (int i = 0; i < mi; ++i, ++row) {
      K(row, os + i) = st.nu[i];
      K(row, on + i) = st.s[i];
      rhs[row] = mu - st.s[i] * st.nu[i];
    }
    for (int i = 0; i < n; ++i, ++row) {
      if (std::isfinite(qp.lo[i])) {
        const double dl = st.x[i] - qp.lo[i];
        K(row, ox + i) = st.z_lo[i];
        K(row, ozl + i) = dl;
        rhs[row] = mu - dl * st.z_lo[i];
      } else {
        K(row, ozl + i) = 1.0;
      }
    }
    for (int i = 0; i < n; ++i, ++row) {
      if (std::isfinite(qp.hi[i])) {
        const double du = qp.hi[i] - st.x[i];
        K(row, ox + i) = -st.z_hi[i];
        K(row, ozh + i) = du;
        rhs[row] = mu - du * st.z_hi[i];
      } else {
        K(row, ozh + i) = 1.0;
      }
    }
    REQUIRE(row == N);
    Eigen::VectorXd got(N);
    got << d.dx, d.ds, d.dlambda, d.dnu, d.dz_lo, d.dz_hi;
    const Eigen::VectorXd oracle = K.fullPivLu().solve(rhs);
    CHECK((got - oracle).lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, oracle.lpNorm<Eigen::Infinity>()));
    CHECK((K * got - rhs).lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("duplicated equality triggers the regularized path") {
  DenseQp qp = make_qp(2);
  qp.Q = 2.0 * Eigen::Matrix2d::Identity();
  qp.c = Eigen::Vector2d(-2.0, -4.0);
  qp.A = Eigen::Matrix2d::Ones();
  qp.b = Eigen::Vector2d::Ones();
  IterateState st;
  st.x = Eigen::Vector2d(0.3, 0.2);
  st.lambda = Eigen::VectorXd::Zero(2);
  st.z_lo = st.z_hi = Eigen::VectorXd::Zero(2);
  EvalBundle b;
  qp.eval(st.x, 1.0, st.lambda, st.nu, b, true);
  KktSystem kkt;
  const Direction d = newton_step(qp, {qp.lo, qp.hi, 1.0}, st, b, 0.0, kkt, IpmOptions{});
  CHECK(d.reg_dual > 0.0);
  CHECK(d.factorizations >= 2);
  CHECK(std::isfinite(d.dx.norm()));
  const SolveResult r = solve(qp, IpmOptions{}, Eigen::Vector2d(5.0, -3.0));
  CHECK(r.status == SolveStatus::OPTIMAL);
  CHECK(std::abs(r.x[0]) < 1e-7);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-7);
}

TEST_CASE("fraction to the boundary") {
  CHECK(fraction_to_boundary(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, -2.0), 0.995) ==
        doctest::Approx(0.4975).epsilon(1e-15));
  CHECK(fraction_to_boundary(Eigen::VectorXd::Ones(2), Eigen::Vector2d(1.0, 0.0), 0.995) == 1.0);
}

TEST_CASE("step length acceptance and rejection") {
  DenseQp qp = make_qp(1);
  qp.Q(0, 0) = 2.0;
  qp.c[0] = -2.0;  // (x - 1)^2 - 1
  const ScaledBounds bd{qp.lo, qp.hi, 1.0};
  IterateState st;
  st.x = Eigen::VectorXd::Zero(1);
  st.z_lo = st.z_hi = Eigen::VectorXd::Zero(1);
  Direction d;
  d.dz_lo = d.dz_hi = Eigen::VectorXd::Zero(1);
  const MeritContext ctx{0.0, 1.0, 1.0};
  EvalBundle b;
  qp.eval(st.x, 1.0, st.lambda, st.nu, b, true);
  const double phi0 = merit_value(bd, ctx, st.x, st.s, b.f, b.h, b.g);

  d.dx = Eigen::VectorXd::Ones(1);
  double slope = merit_slope(bd, ctx, st, d, b.grad_f, 0.0);
  CHECK(slope < 0.0);
  StepLength sl = step_length(qp, bd, st, d, ctx, phi0, slope, IpmOptions{});
  CHECK(sl.accepted);
  CHECK(sl.alpha_primal == 1.0);
  CHECK(sl.alpha_dual == 1.0);

  d.dx = -Eigen::VectorXd::Ones(1);  // ascent
  slope = -1.0;                      // claimed decrease that never materializes
  sl = step_length(qp, bd, st, d, ctx, phi0, slope, IpmOptions{});
  CHECK_FALSE(sl.accepted);
  CHECK(sl.alpha_primal < IpmOptions{}.min_step);
}

TEST_CASE("binding constraints on a synthetic result") {
  SolveResult r;
  r.g = Eigen::Vector3d(-1e-9, -0.5, -1e-7);
  r.slack = Eigen::Vector3d(1e-9, 0.5, 1e-7);
  r.nu = Eigen::Vector3d(3.0, 1e-12, 2.0);
  CHECK(binding_constraints(r, 1e-8) == std::vector<int>{0});
  CHECK(binding_constraints(r, 1e-6) == std::vector<int>{0, 2});
}

TEST_CASE("inequality QP: iterates stay interior and the certificate holds") {
  DenseQp qp = make_qp(3);
  qp.Q = Eigen::Vector3d(2.0, 1.0, 4.0).asDiagonal();
  qp.c = Eigen::Vector3d(-4.0, -1.0, 1.0);
  qp.G = Eigen::RowVector3d(1.0, 1.0, 1.0);
  qp.d = Eigen::VectorXd::Ones(1);
  qp.lo = Eigen::Vector3d(0.0, 0.0, 0.0);
  qp.hi = Eigen::Vector3d(kInf, 0.4, kInf);
  IpmOptions opts;
  opts.keep_trace = true;
  opts.bound_relax = 0.0;
  const SolveResult r = solve(qp, opts, Eigen::Vector3d(0.2, 0.2, 0.2));
  REQUIRE(r.status == SolveStatus::OPTIMAL);
  // KKT by hand: x = (1, 0, 0) with g active, nu = 2, z_lo = (0, 1, 3)
  CHECK(std::abs(r.x[0] - 1.0) <= 1e-8);
  CHECK(std::abs(r.x[1]) <= 1e-8);
  CHECK(std::abs(r.x[2]) <= 1e-8);
  CHECK(std::abs(r.nu[0] - 2.0) <= 1e-7);
  CHECK((r.z_lo - Eigen::Vector3d(0.0, 1.0, 3.0)).lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK((r.slack.array() > 0.0).all());
  CHECK((r.nu.array() > 0.0).all());
  const KktResiduals c = kkt_certificate(qp, r);
  CHECK(c.primal <= opts.tol);
  CHECK(c.dual <= opts.tol);
  CHECK(c.complementarity <= opts.tol);
  CHECK(static_cast<int>(r.trace.size()) == r.iterations);
  CHECK(trace_to_json(r.trace).front() == '[');
}

TEST_CASE("solves are deterministic") {
  const auto a = testsupport::build("case30", FlowVariant::ALLPASS);
  IpmOptions opts;
  opts.keep_trace = true;
  const Eigen::VectorXd x0 = a.problem.initial_point(&a.dc);
  const SolveResult r1 = solve(a.problem, opts, x0);
  const SolveResult r2 = solve(a.problem, opts, x0);
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.x == r2.x);
  CHECK(r1.lambda == r2.lambda);
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (std::size_t k = 0; k < r1.trace.size(); ++k) {
    CHECK(r1.trace[k].objective == r2.trace[k].objective);
    CHECK(r1.trace[k].alpha_primal == r2.trace[k].alpha_primal);
  }
}

TEST_CASE("case9 TRIG objective and KKT certificate") {
  const auto a = testsupport::build("case9", FlowVariant::TRIG);
  const SolveResult r = solve(a.problem, IpmOptions{}, a.problem.initial_point(&a.dc));
  REQUIRE(r.status == SolveStatus::OPTIMAL);
  const double ref = testsupport::reference()["cases"]["case9"]["objective"].get<double>();
  CHECK(std::abs(r.objective - ref) / ref <= 1e-4);
  const KktResiduals c = kkt_certificate(a.problem, r);
  CHECK(c.primal <= 1e-8);
  CHECK(c.dual <= 1e-8);
  CHECK(c.complementarity <= 1e-8);
  CHECK((r.slack.array() > 0.0).all());
  CHECK(((r.x - r.lower).array() > 0.0).all());
  CHECK(((r.upper - r.x).array() > 0.0).all());
}

TEST_CASE("option validation") {
  IpmOptions o;
  CHECK_NOTHROW(o.validate());
  o.sigma = 1.0;
  CHECK_THROWS_AS(o.validate(), Error);
  o = {};
  o.tau = 0.0;
  CHECK_THROWS_AS(o.validate(), Error);
  o = {};
  o.tol = -1.0;
  CHECK_THROWS_AS(o.validate(), Error);
}

TEST_CASE("infeasible problem is not reported optimal") {
  DenseQp qp = make_qp(1);
  qp.Q(0, 0) = 2.0;
  qp.lo[0] = 0.0;
  qp.hi[0] = 1.0;
  qp.A = Eigen::MatrixXd::Ones(1, 1);
  qp.b = Eigen::VectorXd::Constant(1, 3.0);
  IpmOptions o;
  o.max_iter = 100;
  const SolveResult r = solve(qp, o, Eigen::VectorXd::Constant(1, 0.5));
  CHECK(r.status != SolveStatus::OPTIMAL);
}
