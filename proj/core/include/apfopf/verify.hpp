#pragma once

#include <array>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "apfopf/formulation.hpp"
#include "apfopf/ipm.hpp"
#include "apfopf/netmodel.hpp"

namespace apfopf {

enum class CheckClass { BUS_P, BUS_Q, V, PG, QG, ANGLE, FLOW };
inline constexpr std::size_t kNumCheckClasses = 7;

std::string_view to_string(CheckClass c) noexcept;

struct Tolerances {
  double balance_tol = 1e-3;  ///< pu, bus P/Q mismatch
  double bound_tol = 1e-6;    ///< pu or rad, variable bounds and angle limits
  double flow_tol = 1e-6;     ///< pu, apparent-flow excess over rate_a
  double binding_tol = 1e-4;  ///< activity tolerance for binding constraints
  /// Per class: measure violations relative to max(1, |limit|).
  std::array<bool, kNumCheckClasses> relative{};

  void validate() const;
};

/// Exact AC quantities recomputed from V, theta, p_g, q_g.
struct TrueAcState {
  Eigen::VectorXd p_mismatch;  ///< per bus: generation - load - injection
  Eigen::VectorXd q_mismatch;
  Eigen::VectorXd p_from, q_from, p_to, q_to;  ///< per branch, pu
  Eigen::VectorXd s_from, s_to;                ///< |S| per branch end
  Eigen::VectorXd angle_diff;                  ///< theta_from - theta_to
};

/// Complex-arithmetic power flow of the bus admittance matrix. Never uses
/// surrogate kernels. Throws Error(Audit) on dimension mismatch or
/// non-positive / non-finite voltage magnitudes.
TrueAcState evaluate_true_ac(const NetworkCase& network, const AdmittanceModel& adm, const OpfSolution& sol);

struct ClassStats {
  int count = 0;  ///< elements whose violation strictly exceeds the tolerance
  int elements = 0;
  double max = 0.0;
  double mean = 0.0;
  double min = 0.0;
};

struct FeasibilityReport {
  std::array<ClassStats, kNumCheckClasses> classes;
  bool pass = true;

  const ClassStats& operator[](CheckClass c) const { return classes[static_cast<std::size_t>(c)]; }
};

FeasibilityReport feasibility_check(const TrueAcState& state, const NetworkCase& network, const OpfSolution& sol,
                                    const Tolerances& tol);

/// Undirected physical line key (min bus id, max bus id).
using LineKey = std::pair<int, int>;

struct BindingSummary {
  int flow_from = 0;
  int flow_to = 0;
  int angle = 0;
  std::set<LineKey> congested;  ///< lines with a binding flow constraint
};

BindingSummary summarize_binding(const OpfProblem& problem, const SolveResult& result, double activity_tol);

/// max over in-service branches of |theta_from - theta_to|, radians.
double max_angle_difference(const NetworkCase& network, const OpfSolution& sol);

/// One solved model as needed by `compare`.
struct ModelRun {
  std::string label;
  double objective = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  OpfSolution solution;
  BindingSummary binding;
};

struct MismatchStats {
  double max = 0.0;
  double mean = 0.0;
  double min = 0.0;
};

struct ComparisonReport {
  std::string label_a;
  std::string label_b;
  double objective_a = 0.0;
  double objective_b = 0.0;
  double gap_abs = 0.0;
  double gap_pct = 0.0;  ///< 100 |f_a - f_b| / max(|f_a|, eps)
  MismatchStats pg, qg, vm, theta, p_flow, q_flow;
  std::set<LineKey> congested_a;
  std::set<LineKey> congested_b;
  int congestion_mismatch = 0;
  double max_angle_a = 0.0;
  double max_angle_b = 0.0;
  int iterations_a = 0;
  int iterations_b = 0;
  double seconds_a = 0.0;
  double seconds_b = 0.0;
};

ComparisonReport compare(const ModelRun& a, const ModelRun& b, const NetworkCase& network,
                         const AdmittanceModel& adm);

std::string to_json(const FeasibilityReport& report);
std::string to_json(const ComparisonReport& report);
std::string render_text(const FeasibilityReport& report);
std::string render_text(const ComparisonReport& report);

}  // namespace apfopf
