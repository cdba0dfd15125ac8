#include "apfopf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include <fmt/core.h>

#include "apfopf/error.hpp"
#include "report_json.hpp"

namespace apfopf {

std::string_view to_string(CheckClass c) noexcept {
  switch (c) {
    case CheckClass::BUS_P: return "bus_p";
    case CheckClass::BUS_Q: return "bus_q";
    case CheckClass::V: return "v";
    case CheckClass::PG: return "pg";
    case CheckClass::QG: return "qg";
    case CheckClass::ANGLE: return "angle";
    case CheckClass::FLOW: return "s_ij";
  }
  return "unknown";
}

void Tolerances::validate() const {
  for (double t : {balance_tol, bound_tol, flow_tol, binding_tol}) {
    if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCategory::Usage, "tolerances must be positive and finite");
  }
}

TrueAcState evaluate_true_ac(const NetworkCase& net, const AdmittanceModel& adm, const OpfSolution& sol) {
  using cplx = std::complex<double>;
  const int n = static_cast<int>(net.num_buses());
  if (adm.n != n || sol.vm.size() != n || sol.theta.size() != n ||
      sol.pg.size() != static_cast<Eigen::Index>(net.gens.size()) || sol.qg.size() != sol.pg.size()) {
    throw Error(ErrorCategory::Audit, "solution dimensions do not match the case");
  }
  for (int i = 0; i < n; ++i) {
    if (!(sol.vm[i] > 0.0) || !std::isfinite(sol.vm[i]) || !std::isfinite(sol.theta[i])) {
      throw Error(ErrorCategory::Audit, fmt::format("invalid voltage at bus {}: |V| = {}", net.buses[i].id, sol.vm[i]));
    }
  }
  std::vector<cplx> v(n);
  for (int i = 0; i < n; ++i) v[i] = std::polar(sol.vm[i], sol.theta[i]);

  TrueAcState st;
  st.p_mismatch = Eigen::VectorXd::Zero(n);
  st.q_mismatch = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    cplx current = 0.0;
    for (int k = adm.row_start[i]; k < adm.row_start[i + 1]; ++k) {
      current += adm.entries[k].y.to_complex() * v[adm.entries[k].col];
    }
    const cplx s = v[i] * std::conj(current);
    st.p_mismatch[i] = -net.buses[i].p_load - s.real();
    st.q_mismatch[i] = -net.buses[i].q_load - s.imag();
  }
  for (std::size_t k = 0; k < net.gens.size(); ++k) {
    if (!net.gens[k].in_service) continue;
    st.p_mismatch[net.gens[k].bus] += sol.pg[k];
    st.q_mismatch[net.gens[k].bus] += sol.qg[k];
  }

  const auto nb = static_cast<Eigen::Index>(net.branches.size());
  for (Eigen::VectorXd* vec : {&st.p_from, &st.q_from, &st.p_to, &st.q_to, &st.s_from, &st.s_to, &st.angle_diff}) {
    *vec = Eigen::VectorXd::Zero(nb);
  }
  for (Eigen::Index k = 0; k < nb; ++k) {
    const auto& br = net.branches[k];
    if (!br.in_service) continue;
    const auto& y = adm.branches[k];
    const cplx vf = v[br.from];
    const cplx vt = v[br.to];
    const cplx sf = vf * std::conj(y.y_ff.to_complex() * vf + y.y_ft.to_complex() * vt);
    const cplx stt = vt * std::conj(y.y_tf.to_complex() * vf + y.y_tt.to_complex() * vt);
    st.p_from[k] = sf.real();
    st.q_from[k] = sf.imag();
    st.p_to[k] = stt.real();
    st.q_to[k] = stt.imag();
    st.s_from[k] = std::abs(sf);
    st.s_to[k] = std::abs(stt);
    st.angle_diff[k] = sol.theta[br.from] - sol.theta[br.to];
  }
  return st;
}

namespace {

class StatsBuilder {
 public:
  StatsBuilder(double tol, bool relative) : tol_(tol), relative_(relative) {}

  void add(double violation, double limit = 1.0) {
    if (relative_) violation /= std::max(1.0, std::abs(limit));
    ++s_.elements;
    sum_ += violation;
    s_.max = std::max(s_.max, violation);
    min_ = std::min(min_, violation);
    if (violation > tol_) ++s_.count;
  }

  ClassStats done() {
    if (s_.elements > 0) {
      s_.mean = sum_ / s_.elements;
      s_.min = min_;
    }
    return s_;
  }

 private:
  double tol_;
  bool relative_;
  double sum_ = 0.0;
  double min_ = std::numeric_limits<double>::infinity();
  ClassStats s_;
};

double outside(double value, double lo, double hi) {
  return std::max({0.0, value - hi, lo - value});
}

MismatchStats mismatch(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  MismatchStats m;
  if (a.size() == 0) return m;
  const Eigen::VectorXd d = (a - b).cwiseAbs();
  m.max = d.maxCoeff();
  m.mean = d.mean();
  m.min = d.minCoeff();
  return m;
}

}  // namespace

FeasibilityReport feasibility_check(const TrueAcState& st, const NetworkCase& net, const OpfSolution& sol,
                                    const Tolerances& tol) {
  tol.validate();
  auto rel = [&](CheckClass c) { return tol.relative[static_cast<std::size_t>(c)]; };
  FeasibilityReport r;
  StatsBuilder bp(tol.balance_tol, rel(CheckClass::BUS_P));
  StatsBuilder bq(tol.balance_tol, rel(CheckClass::BUS_Q));
  StatsBuilder bv(tol.bound_tol, rel(CheckClass::V));
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& bus = net.buses[i];
    bp.add(std::abs(st.p_mismatch[i]), bus.p_load);
    bq.add(std::abs(st.q_mismatch[i]), bus.q_load);
    bv.add(outside(sol.vm[i], bus.v_min, bus.v_max), bus.v_max);
  }
  StatsBuilder bpg(tol.bound_tol, rel(CheckClass::PG));
  StatsBuilder bqg(tol.bound_tol, rel(CheckClass::QG));
  for (std::size_t k = 0; k < net.gens.size(); ++k) {
    const auto& g = net.gens[k];
    if (!g.in_service) continue;
    bpg.add(outside(sol.pg[k], g.p_min, g.p_max), std::max(std::abs(g.p_min), std::abs(g.p_max)));
    bqg.add(outside(sol.qg[k], g.q_min, g.q_max), std::max(std::abs(g.q_min), std::abs(g.q_max)));
  }
  StatsBuilder ba(tol.bound_tol, rel(CheckClass::ANGLE));
  StatsBuilder bs(tol.flow_tol, rel(CheckClass::FLOW));
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    if (!br.in_service) continue;
    ba.add(outside(st.angle_diff[k], br.ang_min, br.ang_max));
    if (br.rated()) {
      bs.add(std::max(0.0, st.s_from[k] - br.rate_a), br.rate_a);
      bs.add(std::max(0.0, st.s_to[k] - br.rate_a), br.rate_a);
    }
  }
  r.classes = {bp.done(), bq.done(), bv.done(), bpg.done(), bqg.done(), ba.done(), bs.done()};
  r.pass = std::all_of(r.classes.begin(), r.classes.end(), [](const ClassStats& c) { return c.count == 0; });
  return r;
}

BindingSummary summarize_binding(const OpfProblem& problem, const SolveResult& result, double activity_tol) {
  BindingSummary s;
  const auto& net = problem.network();
  for (int row : binding_constraints(result, activity_tol)) {
    const IneqInfo& info = problem.ineq_info()[row];
    const auto& br = net.branches[info.branch];
    switch (info.kind) {
      case IneqKind::FLOW_FROM: ++s.flow_from; break;
      case IneqKind::FLOW_TO: ++s.flow_to; break;
      case IneqKind::ANGLE_MAX:
      case IneqKind::ANGLE_MIN: ++s.angle; continue;
    }
    const int a = net.buses[br.from].id;
    const int b = net.buses[br.to].id;
    s.congested.emplace(std::min(a, b), std::max(a, b));
  }
  return s;
}

double max_angle_difference(const NetworkCase& net, const OpfSolution& sol) {
  double m = 0.0;
  for (const auto& br : net.branches) {
    if (br.in_service) m = std::max(m, std::abs(sol.theta[br.from] - sol.theta[br.to]));
  }
  return m;
}

ComparisonReport compare(const ModelRun& a, const ModelRun& b, const NetworkCase& net, const AdmittanceModel& adm) {
  const auto n = static_cast<Eigen::Index>(net.num_buses());
  if (a.solution.vm.size() != n || b.solution.vm.size() != n || a.solution.pg.size() != b.solution.pg.size()) {
    throw Error(ErrorCategory::Audit, "compared solutions do not belong to the same case");
  }
  ComparisonReport r;
  r.label_a = a.label;
  r.label_b = b.label;
  r.objective_a = a.objective;
  r.objective_b = b.objective;
  r.gap_abs = std::abs(a.objective - b.objective);
  r.gap_pct = 100.0 * r.gap_abs / std::max(std::abs(a.objective), std::numeric_limits<double>::epsilon());

  const int ref = net.ref_bus();
  const auto rebased = [&](const OpfSolution& s) {
    Eigen::VectorXd t = s.theta;
    if (ref >= 0) t.array() -= s.theta[ref];
    return t;
  };
  r.pg = mismatch(a.solution.pg, b.solution.pg);
  r.qg = mismatch(a.solution.qg, b.solution.qg);
  r.vm = mismatch(a.solution.vm, b.solution.vm);
  r.theta = mismatch(rebased(a.solution), rebased(b.solution));

  const TrueAcState fa = evaluate_true_ac(net, adm, a.solution);
  const TrueAcState fb = evaluate_true_ac(net, adm, b.solution);
  Eigen::VectorXd pa(2 * fa.p_from.size()), pb(2 * fa.p_from.size());
  Eigen::VectorXd qa(2 * fa.p_from.size()), qb(2 * fa.p_from.size());
  pa << fa.p_from, fa.p_to;
  pb << fb.p_from, fb.p_to;
  qa << fa.q_from, fa.q_to;
  qb << fb.q_from, fb.q_to;
  r.p_flow = mismatch(pa, pb);
  r.q_flow = mismatch(qa, qb);

  r.congested_a = a.binding.congested;
  r.congested_b = b.binding.congested;
  std::vector<LineKey> diff;
  std::set_symmetric_difference(r.congested_a.begin(), r.congested_a.end(), r.congested_b.begin(),
                                r.congested_b.end(), std::back_inserter(diff));
  r.congestion_mismatch = static_cast<int>(diff.size());
  r.max_angle_a = max_angle_difference(net, a.solution);
  r.max_angle_b = max_angle_difference(net, b.solution);
  r.iterations_a = a.iterations;
  r.iterations_b = b.iterations;
  r.seconds_a = a.solve_seconds;
  r.seconds_b = b.solve_seconds;
  return r;
}

namespace detail {

nlohmann::json json_of(const std::set<LineKey>& lines) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [i, j] : lines) arr.push_back({i, j});
  return arr;
}

nlohmann::json json_of(const FeasibilityReport& r) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumCheckClasses; ++c) {
    const auto& s = r.classes[c];
    classes[std::string(to_string(static_cast<CheckClass>(c)))] = {
        {"count", s.count}, {"elements", s.elements}, {"max", number(s.max)},
        {"mean", number(s.mean)}, {"min", number(s.min)}};
  }
  return {{"pass", r.pass}, {"classes", classes}};
}

nlohmann::json json_of(const ComparisonReport& r) {
  auto stats = [](const MismatchStats& m) {
    return nlohmann::json{{"max", number(m.max)}, {"mean", number(m.mean)}, {"min", number(m.min)}};
  };
  return {{"a", r.label_a},
          {"b", r.label_b},
          {"objective_a", number(r.objective_a)},
          {"objective_b", number(r.objective_b)},
          {"gap_abs", number(r.gap_abs)},
          {"gap_pct", number(r.gap_pct)},
          {"mismatch",
           {{"pg_pu", stats(r.pg)},
            {"qg_pu", stats(r.qg)},
            {"vm_pu", stats(r.vm)},
            {"theta_rad", stats(r.theta)},
            {"p_flow_pu", stats(r.p_flow)},
            {"q_flow_pu", stats(r.q_flow)}}},
          {"congestion",
           {{"a", json_of(r.congested_a)},
            {"b", json_of(r.congested_b)},
            {"count_a", r.congested_a.size()},
            {"count_b", r.congested_b.size()},
            {"mismatch", r.congestion_mismatch}}},
          {"max_angle_diff_rad", {{"a", number(r.max_angle_a)}, {"b", number(r.max_angle_b)}}},
          {"max_angle_diff_deg",
           {{"a", number(r.max_angle_a * 180.0 / std::numbers::pi)},
            {"b", number(r.max_angle_b * 180.0 / std::numbers::pi)}}},
          {"iterations", {{"a", r.iterations_a}, {"b", r.iterations_b}}},
          {"timings", {{"a_seconds", r.seconds_a}, {"b_seconds", r.seconds_b}}}};
}

}  // namespace detail

std::string to_json(const FeasibilityReport& report) { return detail::json_of(report).dump(1); }
std::string to_json(const ComparisonReport& report) { return detail::json_of(report).dump(1); }

std::string render_text(const FeasibilityReport& r) {
  std::string out = fmt::format("feasibility: {}\n", r.pass ? "PASS" : "FAIL");
  out += fmt::format("  {:<7} {:>6} {:>12} {:>12} {:>12}\n", "class", "count", "max", "mean", "min");
  for (std::size_t c = 0; c < kNumCheckClasses; ++c) {
    const auto& s = r.classes[c];
    out += fmt::format("  {:<7} {:>6} {:>12.3e} {:>12.3e} {:>12.3e}\n", to_string(static_cast<CheckClass>(c)),
                       s.count, s.max, s.mean, s.min);
  }
  return out;
}

std::string render_text(const ComparisonReport& r) {
  constexpr double kDeg = 180.0 / std::numbers::pi;
  std::string out;
  out += fmt::format("objective {} = {:.6f}  {} = {:.6f}  gap = {:.3e} ({:.6f} %)\n", r.label_a, r.objective_a,
                     r.label_b, r.objective_b, r.gap_abs, r.gap_pct);
  out += fmt::format("iterations {} = {}  {} = {}\n", r.label_a, r.iterations_a, r.label_b, r.iterations_b);
  out += fmt::format("max |theta_i - theta_j| {} = {:.2f} deg  {} = {:.2f} deg\n", r.label_a,
                     r.max_angle_a * kDeg, r.label_b, r.max_angle_b * kDeg);
  out += fmt::format("congested lines {} = {}  {} = {}  mismatch = {}\n", r.label_a, r.congested_a.size(),
                     r.label_b, r.congested_b.size(), r.congestion_mismatch);
  auto row = [&](std::string_view name, const MismatchStats& m) {
    out += fmt::format("  {:<10} max {:>11.3e}  mean {:>11.3e}  min {:>11.3e}\n", name, m.max, m.mean, m.min);
  };
  out += "variable mismatch (pu, rad):\n";
  row("pg", r.pg);
  row("qg", r.qg);
  row("vm", r.vm);
  row("theta", r.theta);
  row("p_ij/p_ji", r.p_flow);
  row("q_ij/q_ji", r.q_flow);
  return out;
}

}  // namespace apfopf
