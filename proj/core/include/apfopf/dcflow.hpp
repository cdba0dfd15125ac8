#pragma once

#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "apfopf/ipm.hpp"
#include "apfopf/kernels.hpp"
#include "apfopf/netmodel.hpp"

namespace apfopf {

enum class PreRotation { DCPF, DCOPF, NONE };

std::string_view to_string(PreRotation mode) noexcept;
PreRotation parse_prerotation(std::string_view text);

struct DcSolution {
  Eigen::VectorXd theta_dc;  ///< radians per bus, zero at the REF bus
  Eigen::VectorXd dispatch;  ///< per-unit generator outputs (DCOPF only)
  PreRotation mode = PreRotation::NONE;
  double objective = 0.0;  ///< DCOPF cost
  int iterations = 0;
};

/// Reference angles for every coupled pair. `pair_refs` is parallel to
/// AdmittanceModel::entries, `branch_from` / `branch_to` to the branches.
struct RotationTable {
  std::vector<RotationRef> pair_refs;
  std::vector<RotationRef> branch_from;
  std::vector<RotationRef> branch_to;
  Eigen::VectorXd theta_dc;
};

/// Lossless B-theta model. Expects a prepared case (see prepare_case).
struct DcModel {
  Eigen::SparseMatrix<double> bbus;  ///< n x n nodal susceptance
  Eigen::VectorXd p_shift;           ///< nodal injection equivalent of phase shifters
  std::vector<double> b_branch;      ///< 1 / (x tap), zero for off branches
};

DcModel build_dc_model(const NetworkCase& network);

/// Solves B theta = P_gen - P_load - G_shunt - P_shift with the REF row and
/// column removed, using the generator set points of the case.
DcSolution solve_dc_pf(const NetworkCase& network);

/// Infinity norm of the reduced DC balance residual.
double dc_pf_residual(const NetworkCase& network, const DcSolution& dc);

/// Economic dispatch over the DC model with generator bounds, flow limits on
/// rated branches and finite angle-difference limits. Throws Error(Solve)
/// when the solver does not reach an optimal point.
DcSolution solve_dc_opf(const NetworkCase& network, const IpmOptions& opts);

/// All-zero angles, mode NONE.
DcSolution zero_rotation(const NetworkCase& network);

DcSolution solve_prerotation(const NetworkCase& network, PreRotation mode, const IpmOptions& opts);

RotationTable rotation_refs(const DcSolution& dc, const NetworkCase& network, const AdmittanceModel& adm);

/// CSV rows `record,index,i,j,value_rad` with records theta, delta_from and
/// delta_to.
void write_dc_csv(std::ostream& out, const NetworkCase& network, const RotationTable& table);

}  // namespace apfopf
