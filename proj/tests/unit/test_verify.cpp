#include <cmath>
#include <map>
#include <numbers>

#include <doctest.h>

#include "apfopf/error.hpp"
#include "apfopf/pipeline.hpp"
#include "apfopf/verify.hpp"
#include "support.hpp"

using namespace apfopf;
using testsupport::data_path;
using testsupport::load_case;

namespace {

const CaseOutcome& solved(const std::string& name) {
  static std::map<std::string, CaseOutcome> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, solve_case_file(data_path(name + ".m"), CaseOptions{})).first;
  return it->second;
}

OpfSolution reference_solution(const std::string& name) {
  const auto& c = testsupport::reference()["cases"][name];
  auto vec = [&](const char* key) {
    const auto& a = c[key];
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
  };
  return {vec("va_rad"), vec("vm"), vec("pg_pu"), vec("qg_pu")};
}

ModelRun run_of(const ModelOutcome& m, const std::string& label) {
  ModelRun r;
  r.label = label;
  r.objective = m.result.objective;
  r.iterations = m.result.iterations;
  r.solution = m.solution;
  r.binding = m.binding;
  return r;
}

}  // namespace

TEST_CASE("reference operating point is feasible under the exact equations") {
  const NetworkCase net = load_case("case9");
  const AdmittanceModel adm = build_admittance(net);
  const OpfSolution sol = reference_solution("case9");
  const TrueAcState st = evaluate_true_ac(net, adm, sol);
  CHECK(st.p_mismatch.lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(st.q_mismatch.lpNorm<Eigen::Infinity>() <= 1e-6);
  const FeasibilityReport rep = feasibility_check(st, net, sol, Tolerances{});
  CHECK(rep.pass);
  for (const auto& c : rep.classes) CHECK(c.count == 0);
}

TEST_CASE("constructed voltage violation is counted once") {
  const NetworkCase net = load_case("case9");
  const AdmittanceModel adm = build_admittance(net);
  OpfSolution sol = reference_solution("case9");
  sol.vm[4] = net.buses[4].v_max + 1e-3;
  const FeasibilityReport rep = feasibility_check(evaluate_true_ac(net, adm, sol), net, sol, Tolerances{});
  CHECK(rep[CheckClass::V].count == 1);
  CHECK(rep[CheckClass::V].max == doctest::Approx(1e-3).epsilon(1e-9));
  CHECK_FALSE(rep.pass);
}

TEST_CASE("bad inputs are rejected before evaluation") {
  const NetworkCase net = load_case("case9");
  const AdmittanceModel adm = build_admittance(net);
  OpfSolution sol = reference_solution("case9");
  sol.vm[2] = 0.0;
  CHECK_THROWS_AS(evaluate_true_ac(net, adm, sol), Error);
  sol = reference_solution("case9");
  sol.theta.conservativeResize(3);
  CHECK_THROWS_AS(evaluate_true_ac(net, adm, sol), Error);
  sol = reference_solution("case9");
  sol.vm[0] = std::nan("");
  ErrorCategory cat = ErrorCategory::Usage;
  try {
    evaluate_true_ac(net, adm, sol);
  } catch (const Error& e) {
    cat = e.category();
  }
  CHECK(cat == ErrorCategory::Audit);
}

TEST_CASE("TRIG optimum re-evaluates to solver accuracy") {
  for (const char* name : {"case9", "case30"}) {
    const CaseOutcome& c = solved(name);
    REQUIRE(c.ac);
    CHECK(c.ac->true_ac.p_mismatch.lpNorm<Eigen::Infinity>() <= 1e-7);
    CHECK(c.ac->true_ac.q_mismatch.lpNorm<Eigen::Infinity>() <= 1e-7);
    CHECK(c.ac->feasibility.pass);
  }
}

TEST_CASE("APF solutions pass the exact-physics audit on small cases") {
  const CaseOutcome& c9 = solved("case9");
  REQUIRE(c9.apf);
  CHECK(c9.apf->true_ac.p_mismatch.lpNorm<Eigen::Infinity>() <= 1e-3);
  CHECK(c9.apf->feasibility.pass);
  const CaseOutcome& c30 = solved("case30");
  REQUIRE(c30.apf);
  CHECK(c30.apf->feasibility.pass);
}

TEST_CASE("report totals are consistent") {
  const Tolerances tol;
  for (const char* name : {"case9", "case30"}) {
    for (const auto* m : {&*solved(name).ac, &*solved(name).apf}) {
      for (std::size_t k = 0; k < kNumCheckClasses; ++k) {
        const ClassStats& s = m->feasibility.classes[k];
        CHECK(s.min <= s.mean + 1e-15);
        CHECK(s.mean <= s.max + 1e-15);
        CHECK(s.count <= s.elements);
        if (s.count == 0) {
          const auto cls = static_cast<CheckClass>(k);
          const double t = cls == CheckClass::BUS_P || cls == CheckClass::BUS_Q ? tol.balance_tol
                           : cls == CheckClass::FLOW                             ? tol.flow_tol
                                                                                 : tol.bound_tol;
          CHECK(s.max <= t);
        }
      }
      bool all_zero = true;
      for (const auto& s : m->feasibility.classes) all_zero = all_zero && s.count == 0;
      CHECK(m->feasibility.pass == all_zero);
    }
  }
}

TEST_CASE("comparing a result with itself") {
  const CaseOutcome& c = solved("case30");
  const NetworkCase net = load_case("case30");
  const AdmittanceModel adm = build_admittance(net);
  const ModelRun a = run_of(*c.apf, "apf");
  const ComparisonReport r = compare(a, a, net, adm);
  CHECK(r.gap_abs == 0.0);
  CHECK(r.gap_pct == 0.0);
  for (const MismatchStats* m : {&r.pg, &r.qg, &r.vm, &r.theta, &r.p_flow, &r.q_flow}) CHECK(m->max == 0.0);
  CHECK(r.congestion_mismatch == 0);
}

TEST_CASE("comparison is symmetric in its magnitudes") {
  const CaseOutcome& c = solved("case30");
  const NetworkCase net = load_case("case30");
  const AdmittanceModel adm = build_admittance(net);
  const ModelRun a = run_of(*c.ac, "ac");
  const ModelRun b = run_of(*c.apf, "apf");
  const ComparisonReport ab = compare(a, b, net, adm);
  const ComparisonReport ba = compare(b, a, net, adm);
  CHECK(ab.gap_abs == ba.gap_abs);
  CHECK(ab.gap_pct == doctest::Approx(ba.gap_pct).epsilon(1e-12));
  CHECK(ab.congestion_mismatch == ba.congestion_mismatch);
  const MismatchStats* x[] = {&ab.pg, &ab.qg, &ab.vm, &ab.theta, &ab.p_flow, &ab.q_flow};
  const MismatchStats* y[] = {&ba.pg, &ba.qg, &ba.vm, &ba.theta, &ba.p_flow, &ba.q_flow};
  for (int i = 0; i < 6; ++i) {
    CHECK(x[i]->max == y[i]->max);
    CHECK(x[i]->mean == doctest::Approx(y[i]->mean).epsilon(1e-12));
  }
  CHECK(ab.congested_a == ba.congested_b);
}

TEST_CASE("case30: same congested lines and negligible gap") {
  const CaseOutcome& c = solved("case30");
  REQUIRE(c.comparison);
  CHECK(c.comparison->congested_a.size() == 2);
  CHECK(c.comparison->congested_b.size() == 2);
  CHECK(c.comparison->congestion_mismatch == 0);
  CHECK(c.comparison->gap_pct <= 1e-3);
  for (const auto& [i, j] : c.comparison->congested_a) CHECK(i < j);
}

TEST_CASE("case9: maximum branch angle difference") {
  const CaseOutcome& c = solved("case9");
  REQUIRE(c.comparison);
  const double deg = 180.0 / std::numbers::pi;
  CHECK(std::abs(c.comparison->max_angle_a * deg - 5.5) <= 1.0);
  CHECK(std::abs(c.comparison->max_angle_b * deg - 5.5) <= 1.0);
  const double ref = testsupport::reference()["cases"]["case9"]["max_angle_diff_deg"].get<double>();
  CHECK(std::abs(c.ac->max_angle * deg - ref) <= 1e-4);
}

TEST_CASE("gap convention") {
  const CaseOutcome& c = solved("case9");
  const ComparisonReport& r = *c.comparison;
  CHECK(r.gap_abs == doctest::Approx(std::abs(r.objective_a - r.objective_b)));
  CHECK(r.gap_pct == doctest::Approx(100.0 * r.gap_abs / std::abs(r.objective_a)));
}

TEST_CASE("renderings") {
  const CaseOutcome& c = solved("case9");
  const auto fj = nlohmann::json::parse(to_json(c.apf->feasibility));
  CHECK(fj.is_object());
  const auto cj = nlohmann::json::parse(to_json(*c.comparison));
  CHECK(cj.is_object());
  const std::string ft = render_text(c.apf->feasibility);
  const std::string ct = render_text(*c.comparison);
  CHECK(ft.find("bus_p") != std::string::npos);
  CHECK_FALSE(ct.empty());
}

TEST_CASE("tolerances validate") {
  Tolerances t;
  CHECK_NOTHROW(t.validate());
  t.balance_tol = 0.0;
  CHECK_THROWS_AS(t.validate(), Error);
  t = Tolerances{};
  t.binding_tol = -1.0;
  CHECK_THROWS_AS(t.validate(), Error);
}
