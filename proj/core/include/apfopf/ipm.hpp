#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "apfopf/nlp.hpp"
#include "apfopf/sparse_ldlt.hpp"

namespace apfopf {

struct IpmOptions {
  double mu0 = 1e-1;
  double sigma = 0.2;   ///< barrier reduction factor
  double kappa = 10.0;  ///< inner loop stops once the barrier error <= kappa * mu
  double tol = 1e-8;
  int max_iter = 300;
  double tau = 0.995;  ///< fraction to the boundary
  double reg_min = 1e-10;
  double reg_max = 1e-2;
  double bound_relax = 1e-8;
  double bound_push = 1e-2;
  double obj_scaling_max_grad = 100.0;
  double armijo = 1e-4;
  double min_step = 1e-12;
  int max_refinement = 10;
  std::ostream* log = nullptr;  ///< one line per iteration when set
  bool keep_trace = false;

  void validate() const;
};

enum class SolveStatus { OPTIMAL, MAX_ITER, STEP_FAILURE, INFEASIBLE_DETECTED };

std::string_view to_string(SolveStatus status) noexcept;

/// Primal-dual iterate. Inequalities are handled as g(x) + s = 0 with s > 0;
/// `nu` multiplies them and `z_lo`/`z_hi` the simple bounds (zero where the
/// bound is infinite). Multipliers refer to the objective-scaled problem.
struct IterateState {
  Eigen::VectorXd x;
  Eigen::VectorXd s;
  Eigen::VectorXd lambda;
  Eigen::VectorXd nu;
  Eigen::VectorXd z_lo;
  Eigen::VectorXd z_hi;
  double mu = 0.1;
};

/// Bounds as seen by the solver (relaxed copies of the NLP bounds) plus the
/// objective scale.
struct ScaledBounds {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  double obj_scale = 1.0;
};

struct Direction {
  Eigen::VectorXd dx;
  Eigen::VectorXd ds;
  Eigen::VectorXd dlambda;
  Eigen::VectorXd dnu;
  Eigen::VectorXd dz_lo;
  Eigen::VectorXd dz_hi;
  double reg_primal = 0.0;  ///< inertia-correction shift on the Hessian block
  double reg_dual = 0.0;    ///< shift on the equality block (rank deficiency)
  Inertia inertia;
  int factorizations = 0;
  /// Quadratic model curvature dx'(W + Sigma)dx + ds' (N / S) ds.
  double curvature = 0.0;
};

/// Factorization state reused across Newton steps.
class KktSystem {
 public:
  SparseLdlt ldlt;
  double last_reg = 0.0;
  bool analyzed = false;
  double factor_seconds = 0.0;
};

/// Solves the Newton system of the barrier subproblem for barrier `mu`.
/// Slack and multiplier components are eliminated through the
/// complementarity rows, the remaining symmetric indefinite system
/// [W + Sigma + J_g' (N/S) J_g + dw I, J_h'; J_h, -dc I] is factored and its
/// inertia corrected to (n, m_eq, 0), then the eliminated components are
/// recovered by back-substitution. Throws Error(Numeric) when the inertia
/// cannot be corrected within reg_max.
Direction newton_step(const Nlp& nlp, const ScaledBounds& bounds, const IterateState& state,
                      const EvalBundle& bundle, double mu, KktSystem& kkt, const IpmOptions& opts);

/// Largest alpha in (0, 1] with value + alpha * delta >= (1 - tau) * value.
double fraction_to_boundary(const Eigen::VectorXd& value, const Eigen::VectorXd& delta, double tau);

struct MeritContext {
  double mu = 0.0;
  double penalty = 0.0;
  double obj_scale = 1.0;
};

/// Barrier merit: scaled f - mu * sum(log slack) + penalty * (|h|_1 + |g + s|_1).
double merit_value(const ScaledBounds& bounds, const MeritContext& ctx, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& s, double f, const Eigen::VectorXd& h,
                   const Eigen::VectorXd& g);

/// Directional derivative of the merit along (dx, ds), assuming the step
/// zeroes the linearized constraint residuals.
double merit_slope(const ScaledBounds& bounds, const MeritContext& ctx, const IterateState& state,
                   const Direction& dir, const Eigen::VectorXd& grad_f, double infeasibility_l1);

struct StepLength {
  double alpha_max = 1.0;  ///< primal fraction-to-boundary cap
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  int backtracks = 0;
  bool accepted = false;
};

/// Fraction-to-boundary caps followed by Armijo backtracking (halving) on the
/// merit function. `accepted` is false when alpha would drop below min_step.
StepLength step_length(const Nlp& nlp, const ScaledBounds& bounds, const IterateState& state,
                       const Direction& dir, const MeritContext& ctx, double merit0, double slope,
                       const IpmOptions& opts);

struct KktResiduals {
  double primal = 0.0;           ///< max(|h|, |g + s|)
  double dual = 0.0;             ///< |grad L| / s_d
  double complementarity = 0.0;  ///< max complementarity product / s_c
};

struct IterationRecord {
  int iter = 0;
  double mu = 0.0;
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  double objective = 0.0;
  KktResiduals residuals;
  double reg = 0.0;
  int backtracks = 0;
};

struct SolveTimings {
  double assembly = 0.0;
  double factorization = 0.0;
  double total = 0.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::MAX_ITER;
  Eigen::VectorXd x;
  double objective = 0.0;  ///< unscaled f(x*)
  double obj_scale = 1.0;
  /// Multipliers in unscaled objective units.
  Eigen::VectorXd lambda;
  Eigen::VectorXd nu;
  Eigen::VectorXd z_lo;
  Eigen::VectorXd z_hi;
  Eigen::VectorXd slack;
  Eigen::VectorXd g;  ///< inequality values at x*
  Eigen::VectorXd lower;  ///< relaxed bounds the solver worked with
  Eigen::VectorXd upper;
  int iterations = 0;
  KktResiduals residuals;
  SolveTimings timings;
  std::vector<IterationRecord> trace;
  std::string message;
};

/// Monotone primal-dual barrier method. `x0` must lie strictly inside the
/// bounds; it is pushed further inside by `bound_push` first.
SolveResult solve(const Nlp& nlp, const IpmOptions& opts, const Eigen::VectorXd& x0);

/// Recomputes the unperturbed KKT residuals of a result from scratch.
KktResiduals kkt_certificate(const Nlp& nlp, const SolveResult& result);

/// Inequality rows that are active (g_i >= -activity_tol) or carry a
/// multiplier >= multiplier_tol with slack below activity_tol.
std::vector<int> binding_constraints(const SolveResult& result, double activity_tol,
                                     double multiplier_tol = 1e-6);

/// JSON array with one object per iteration.
std::string trace_to_json(const std::vector<IterationRecord>& trace);

}  // namespace apfopf
