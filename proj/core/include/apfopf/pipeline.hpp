#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apfopf/dcflow.hpp"
#include "apfopf/error.hpp"
#include "apfopf/formulation.hpp"
#include "apfopf/ipm.hpp"
#include "apfopf/kernels.hpp"
#include "apfopf/netmodel.hpp"
#include "apfopf/verify.hpp"

namespace apfopf {

enum class ModelChoice { AC, APF, BOTH };

std::string_view to_string(ModelChoice m) noexcept;
ModelChoice parse_model_choice(std::string_view text);

/// Exit codes of the batch driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitParse = 3,
  kExitAssembly = 4,
  kExitSolve = 5,
  kExitAudit = 6,
};

int exit_code_for(ErrorCategory category) noexcept;

/// Settings shared by every case of a run.
struct CaseOptions {
  ModelChoice model = ModelChoice::BOTH;
  PreRotation prerotation = PreRotation::DCPF;
  KernelParam kernel;
  double rate_scale_m = 0.0;
  Tolerances tolerances;
  IpmOptions ipm;
  bool keep_solution = true;  ///< include per-bus / per-generator vectors in the JSON
};

struct ModelOutcome {
  FlowVariant variant = FlowVariant::TRIG;
  SolveResult result;
  OpfSolution solution;
  TrueAcState true_ac;
  FeasibilityReport feasibility;
  BindingSummary binding;
  double max_angle = 0.0;  ///< rad
  std::string log;         ///< iteration log when requested
};

struct CaseOutcome {
  std::string name;
  std::string source;
  int n_bus = 0;
  int n_gen = 0;
  int n_branch = 0;
  PreRotation prerotation_used = PreRotation::NONE;
  std::vector<std::string> notes;
  std::optional<ModelOutcome> ac;
  std::optional<ModelOutcome> apf;
  std::optional<ComparisonReport> comparison;
  int exit_code = kExitOk;
  std::optional<ErrorCategory> error;
  std::string message;
};

/// parse -> prepare -> rating scaling -> admittance -> pre-rotation ->
/// assemble -> solve (each requested model, no shared iterates) -> audit.
/// Never throws for case-level failures; they are reported in the outcome.
CaseOutcome solve_case(const NetworkCase& raw, const CaseOptions& opts, bool want_log = false);
CaseOutcome solve_case_file(const std::string& path, const CaseOptions& opts, bool want_log = false);

struct RunConfig {
  std::vector<std::string> case_paths;
  CaseOptions options;
  std::vector<double> a_params;  ///< at most one entry
  std::string json_path;         ///< "-" for stdout
  std::string text_path;         ///< human-readable summary, "-" for stdout
  bool emit_kernel_samples = false;
  std::string kernel_csv_path;   ///< "-" for stdout
  KernelSampleGrid kernel_grid;
  std::string log_path;          ///< iteration logs
  std::string trace_path;        ///< JSON iteration traces
  std::string dump_case_json;    ///< prefix, one file per case
  std::string dump_dc_csv;
  std::string dump_constraints_csv;
  int jobs = 1;

  void validate() const;
};

struct RunReport {
  int exit_code = kExitOk;
  std::vector<CaseOutcome> cases;
  std::string json;  ///< full report payload
  std::string text;
};

RunReport run(const RunConfig& config);

/// JSON payload of a set of outcomes (schema apfopf.report/1).
std::string report_json(const std::vector<CaseOutcome>& cases, const CaseOptions& opts, int exit_code);

}  // namespace apfopf
