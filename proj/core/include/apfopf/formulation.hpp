#pragma once

#include <iosfwd>
#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "apfopf/dcflow.hpp"
#include "apfopf/kernels.hpp"
#include "apfopf/netmodel.hpp"
#include "apfopf/nlp.hpp"

namespace apfopf {

enum class FlowVariant { TRIG, ALLPASS };

std::string_view to_string(FlowVariant v) noexcept;

struct FlowMode {
  FlowVariant variant = FlowVariant::TRIG;
  KernelParam kernel;
  std::shared_ptr<const RotationTable> rotations;  ///< required for ALLPASS

  static FlowMode trig() { return {}; }
  static FlowMode allpass(RotationTable table, KernelParam p = {}) {
    return {FlowVariant::ALLPASS, p, std::make_shared<const RotationTable>(std::move(table))};
  }
};

/// x = [theta (non-reference buses) | V | p_g | q_g].
struct VarLayout {
  int n_bus = 0;
  int n_gen = 0;
  int ref = 0;
  std::vector<int> theta_col;  ///< per bus, -1 for the reference bus
  int v_start = 0;
  int pg_start = 0;
  int qg_start = 0;
  int size = 0;

  int theta(int bus) const { return theta_col[bus]; }
  int v(int bus) const { return v_start + bus; }
  int pg(int gen) const { return pg_start + gen; }
  int qg(int gen) const { return qg_start + gen; }
};

enum class IneqKind { FLOW_FROM, FLOW_TO, ANGLE_MAX, ANGLE_MIN };

std::string_view to_string(IneqKind k) noexcept;

struct IneqInfo {
  IneqKind kind = IneqKind::FLOW_FROM;
  int branch = 0;
};

/// Operating point in bus / generator order. theta is zero at the reference bus.
struct OpfSolution {
  Eigen::VectorXd theta;
  Eigen::VectorXd vm;
  Eigen::VectorXd pg;
  Eigen::VectorXd qg;
};

/// AC OPF with either the exact or the pre-rotated all-pass flow kernels.
///
/// Equalities are the 2n nodal balances (P rows first), inequalities follow
/// branch order: squared apparent flow at both ends for rated branches, then
/// angle-difference limits where finite.
class OpfProblem final : public Nlp {
 public:
  OpfProblem(NetworkCase network, AdmittanceModel adm, FlowMode mode);

  int num_vars() const override { return layout_.size; }
  int num_eq() const override { return 2 * layout_.n_bus; }
  int num_ineq() const override { return static_cast<int>(ineq_.size()); }
  const Eigen::VectorXd& lower() const override { return lo_; }
  const Eigen::VectorXd& upper() const override { return hi_; }

  void eval(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
            const Eigen::VectorXd& nu, EvalBundle& out, bool want_hessian = true) const override;
  void eval_values(const Eigen::VectorXd& x, double& f, Eigen::VectorXd& h,
                   Eigen::VectorXd& g) const override;

  const VarLayout& layout() const noexcept { return layout_; }
  const std::vector<IneqInfo>& ineq_info() const noexcept { return ineq_; }
  const NetworkCase& network() const noexcept { return net_; }
  const AdmittanceModel& admittance() const noexcept { return adm_; }
  const FlowMode& mode() const noexcept { return mode_; }

  /// V = 1, theta from `dc` (or 0), generator outputs at bound midpoints, all
  /// pulled at least 1e-4 inside their bounds. Throws Error(Assembly) with
  /// "empty interior" when a bound interval is empty.
  Eigen::VectorXd initial_point(const DcSolution* dc = nullptr) const;

  OpfSolution extract(const Eigen::VectorXd& x) const;
  Eigen::VectorXd pack(const OpfSolution& sol) const;

  /// CSV `kind,index,label,value` with the constraint values at x.
  void write_constraint_csv(std::ostream& out, const Eigen::VectorXd& x) const;

 private:
  template <bool Derivs>
  void evaluate(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd* lambda,
                const Eigen::VectorXd* nu, EvalBundle& out, bool want_hessian) const;

  NetworkCase net_;
  AdmittanceModel adm_;
  FlowMode mode_;
  VarLayout layout_;
  std::vector<IneqInfo> ineq_;
  std::vector<int> row_of_entry_;  ///< bus row for each admittance entry
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
};

/// Validates the mode against the network and builds the problem. Throws
/// Error(Assembly) when ALLPASS lacks a matching rotation table.
OpfProblem assemble(const NetworkCase& network, const AdmittanceModel& adm, const FlowMode& mode);

}  // namespace apfopf
