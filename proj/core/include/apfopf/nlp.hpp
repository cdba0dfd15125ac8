#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace apfopf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Values and derivatives of a smooth NLP at one point:
///
///   min f(x)  s.t.  h(x) = 0,  g(x) <= 0,  lower <= x <= upper.
///
/// `hessian` holds the lower triangle of obj_factor * Hess f + sum lambda_i
/// Hess h_i + sum nu_j Hess g_j. Sparsity patterns are identical on every call.
struct EvalBundle {
  double f = 0.0;
  Eigen::VectorXd grad_f;
  Eigen::VectorXd h;
  Eigen::VectorXd g;
  SparseMatrix jac_h;
  SparseMatrix jac_g;
  SparseMatrix hessian;
};

/// Abstract NLP driven by the interior-point solver.
class Nlp {
 public:
  virtual ~Nlp() = default;

  virtual int num_vars() const = 0;
  virtual int num_eq() const = 0;
  virtual int num_ineq() const = 0;

  /// Simple bounds; use +/-infinity where absent.
  virtual const Eigen::VectorXd& lower() const = 0;
  virtual const Eigen::VectorXd& upper() const = 0;

  /// Fills everything in `out`. The Hessian is skipped when `want_hessian`
  /// is false, leaving whatever `out.hessian` held before.
  virtual void eval(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                    const Eigen::VectorXd& nu, EvalBundle& out, bool want_hessian = true) const = 0;

  /// Cheap evaluation of f, h and g only, used by the line search.
  virtual void eval_values(const Eigen::VectorXd& x, double& f, Eigen::VectorXd& h,
                           Eigen::VectorXd& g) const;
};

}  // namespace apfopf
