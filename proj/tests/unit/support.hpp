#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "apfopf/dcflow.hpp"
#include "apfopf/formulation.hpp"
#include "apfopf/netmodel.hpp"

namespace testsupport {

inline std::string data_path(const std::string& file) { return std::string(APFOPF_DATA_DIR) + "/" + file; }

inline apfopf::NetworkCase load_case(const std::string& name) {
  return apfopf::prepare_case(apfopf::load_matpower_file(data_path(name + ".m")));
}

inline const nlohmann::json& reference() {
  static const nlohmann::json ref = [] {
    std::ifstream f(data_path("reference_opf.json"));
    return nlohmann::json::parse(f);
  }();
  return ref;
}

/// A problem of either variant on a prepared case, with DC-PF pre-rotation.
struct Built {
  apfopf::NetworkCase net;
  apfopf::AdmittanceModel adm;
  apfopf::DcSolution dc;
  apfopf::OpfProblem problem;
};

inline Built build(const std::string& name, apfopf::FlowVariant variant, apfopf::PreRotation pre = apfopf::PreRotation::DCPF) {
  using namespace apfopf;
  NetworkCase net = load_case(name);
  AdmittanceModel adm = build_admittance(net);
  DcSolution dc = solve_prerotation(net, pre, IpmOptions{});
  FlowMode mode = variant == FlowVariant::TRIG ? FlowMode::trig() : FlowMode::allpass(rotation_refs(dc, net, adm));
  OpfProblem problem = assemble(net, adm, mode);
  return {std::move(net), std::move(adm), std::move(dc), std::move(problem)};
}

/// Random point inside the bounds with angles near the DC solution.
inline Eigen::VectorXd random_point(const apfopf::OpfProblem& p, const apfopf::DcSolution& dc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& lay = p.layout();
  Eigen::VectorXd x(p.num_vars());
  for (int i = 0; i < x.size(); ++i) {
    const double lo = std::max(p.lower()[i], -2.0);
    const double hi = std::min(p.upper()[i], 2.0);
    x[i] = lo + (hi - lo) * u(rng);
  }
  for (int b = 0; b < lay.n_bus; ++b) {
    if (lay.theta(b) >= 0) x[lay.theta(b)] = dc.theta_dc[b] + 0.3 * (2.0 * u(rng) - 1.0);
  }
  return x;
}

inline double rel_err(double analytic, double fd) { return std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)); }

}  // namespace testsupport

namespace testsupport {

/// Small MATPOWER text: `branches` rows are "f t r x b rate ratio angle status angmin angmax".
inline std::string mini_case(const std::string& buses, const std::string& gens, const std::string& branches,
                             const std::string& costs) {
  std::ostringstream s;
  s << "function mpc = mini\nmpc.version = '2';\nmpc.baseMVA = 100;\n";
  s << "mpc.bus = [\n" << buses << "];\n";
  s << "mpc.gen = [\n" << gens << "];\n";
  s << "mpc.branch = [\n" << branches << "];\n";
  s << "mpc.gencost = [\n" << costs << "];\n";
  return s.str();
}

/// Two buses, generator at bus 1, `load_mw` at bus 2, one line r = 0, x = 0.1.
inline std::string two_bus(double load_mw, const std::string& extra_branch = "") {
  return mini_case(
      "1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n2 1 " + std::to_string(load_mw) + " 0 0 0 1 1 0 100 1 1.1 0.9;\n",
      "1 " + std::to_string(load_mw) + " 0 100 -100 1 100 1 300 0 0 0 0 0 0 0 0 0 0 0 0;\n",
      "1 2 0 0.1 0 0 0 0 0 0 1 -360 360;\n" + extra_branch, "2 0 0 3 0.01 10 0;\n");
}

}  // namespace testsupport
