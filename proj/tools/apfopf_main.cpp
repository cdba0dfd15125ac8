// apfopf: solve AC OPF cases with the trigonometric and the all-pass flow
// model, audit the results under exact AC physics and compare the two.

#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "apfopf/error.hpp"
#include "apfopf/pipeline.hpp"

namespace {

apfopf::KernelSampleGrid parse_range(const std::string& text, const std::string& unit) {
  apfopf::KernelSampleGrid grid;
  grid.radians = unit == "rad";
  if (!grid.radians && unit != "deg") {
    throw apfopf::Error(apfopf::ErrorCategory::Usage, fmt::format("--delta-unit must be deg or rad, got '{}'", unit));
  }
  if (text.empty()) {
    if (grid.radians) grid = {-std::numbers::pi, std::numbers::pi, 0.01, true};
    return grid;
  }
  std::vector<double> parts;
  std::size_t pos = 0;
  try {
    while (pos <= text.size()) {
      const std::size_t next = text.find(':', pos);
      parts.push_back(std::stod(text.substr(pos, next - pos)));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  } catch (const std::exception&) {
    parts.clear();
  }
  if (parts.size() != 3) {
    throw apfopf::Error(apfopf::ErrorCategory::Usage,
                        fmt::format("--delta-range expects start:stop:step, got '{}'", text));
  }
  grid.start = parts[0];
  grid.stop = parts[1];
  grid.step = parts[2];
  return grid;
}

void print_usage_error(const std::string& msg, const std::string& json_path) {
  std::cerr << "apfopf: " << msg << "\n";
  if (json_path == "-") {
    std::cout << fmt::format(R"({{"schema": "apfopf.report/1", "exit_code": {}, "error_category": "usage", "cases": []}})",
                             static_cast<int>(apfopf::kExitUsage))
              << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace apfopf;
  CLI::App app{"All-pass vs trigonometric AC optimal power flow"};
  app.set_version_flag("--version", "apfopf 0.1.0");

  RunConfig cfg;
  std::string model = "both", prerotation = "dcpf";
  std::string delta_range, delta_unit = "deg";
  double a = cfg.options.kernel.a;
  bool text_stdout = false;

  app.add_option("-c,--case", cfg.case_paths, "MATPOWER case file (repeatable)");
  app.add_option("-m,--model", model, "ac, apf or both")->capture_default_str();
  app.add_option("-p,--prerotation", prerotation, "dcpf, dcopf or none")->capture_default_str();
  app.add_option("-a,--a", a, "all-pass kernel parameter, a > 0")->capture_default_str();
  app.add_option("--a-params", cfg.a_params, "kernel pole list (only a single pole is supported)")->delimiter(',');
  app.add_option("--rate-scale", cfg.options.rate_scale_m,
                 "tighten rate_a by m percent on the first 90% of rated branches in index order")
      ->capture_default_str();

  auto& tol = cfg.options.tolerances;
  app.add_option("--balance-tol", tol.balance_tol, "audit tolerance on bus P/Q mismatch [pu]")->capture_default_str();
  app.add_option("--bound-tol", tol.bound_tol, "audit tolerance on bounds and angle limits")->capture_default_str();
  app.add_option("--flow-tol", tol.flow_tol, "audit tolerance on apparent-flow excess [pu]")->capture_default_str();
  app.add_option("--binding-tol", tol.binding_tol, "activity tolerance for binding constraints")->capture_default_str();

  auto& ipm = cfg.options.ipm;
  app.add_option("--tol", ipm.tol, "IPM convergence tolerance")->capture_default_str();
  app.add_option("--max-iter", ipm.max_iter, "IPM iteration limit")->capture_default_str();
  app.add_option("--mu0", ipm.mu0, "initial barrier parameter")->capture_default_str();
  app.add_option("--tau", ipm.tau, "fraction-to-boundary parameter")->capture_default_str();
  app.add_option("--reg-max", ipm.reg_max, "largest inertia-correction shift")->capture_default_str();

  app.add_option("--json", cfg.json_path, "JSON report path, - for stdout");
  app.add_option("--text", cfg.text_path, "text summary path, - for stdout");
  app.add_flag("--summary", text_stdout, "print the text summary to stdout");
  app.add_flag("--emit-kernel-samples", cfg.emit_kernel_samples, "write kernel samples as CSV");
  app.add_option("--kernel-csv", cfg.kernel_csv_path, "kernel sample CSV path (default stdout)");
  app.add_option("--delta-range", delta_range, "kernel sample grid start:stop:step");
  app.add_option("--delta-unit", delta_unit, "unit of --delta-range: deg or rad")
      ->capture_default_str();
  app.add_option("--log", cfg.log_path, "iteration log path, - for stderr");
  app.add_option("--trace", cfg.trace_path, "JSON iteration trace path");
  app.add_option("--dump-case-json", cfg.dump_case_json, "write the prepared case as JSON");
  app.add_option("--dump-dc", cfg.dump_dc_csv, "write pre-rotation angles and references as CSV");
  app.add_option("--dump-constraints", cfg.dump_constraints_csv, "write constraint values at the solution as CSV");
  app.add_option("-j,--jobs", cfg.jobs, "solve independent cases concurrently")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    cfg.options.model = parse_model_choice(model);
    cfg.options.prerotation = parse_prerotation(prerotation);
    cfg.options.kernel.a = a;
    cfg.kernel_grid = parse_range(delta_range, delta_unit);
    if (text_stdout && cfg.text_path.empty()) cfg.text_path = "-";
    if (cfg.json_path.empty() && cfg.text_path.empty() && !cfg.case_paths.empty()) cfg.text_path = "-";
    const RunReport report = run(cfg);
    return report.exit_code;
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::Usage) {
      print_usage_error(e.what(), cfg.json_path);
      return kExitUsage;
    }
    std::cerr << fmt::format("apfopf: [{}] {}\n", to_string(e.category()), e.what());
    return exit_code_for(e.category());
  }
}
