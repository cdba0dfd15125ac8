#include "apfopf/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <json.hpp>

#include "apfopf/error.hpp"
#include "report_json.hpp"

namespace apfopf {

using nlohmann::json;

std::string_view to_string(ModelChoice m) noexcept {
  switch (m) {
    case ModelChoice::AC: return "ac";
    case ModelChoice::APF: return "apf";
    case ModelChoice::BOTH: return "both";
  }
  return "both";
}

ModelChoice parse_model_choice(std::string_view text) {
  if (text == "ac") return ModelChoice::AC;
  if (text == "apf") return ModelChoice::APF;
  if (text == "both") return ModelChoice::BOTH;
  throw Error(ErrorCategory::Usage, fmt::format("unknown model '{}' (ac, apf, both)", text));
}

int exit_code_for(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Usage: return kExitUsage;
    case ErrorCategory::Parse:
    case ErrorCategory::Validation: return kExitParse;
    case ErrorCategory::Assembly:
    case ErrorCategory::Numeric: return kExitAssembly;
    case ErrorCategory::Solve: return kExitSolve;
    case ErrorCategory::Audit: return kExitAudit;
  }
  return kExitSolve;
}

namespace {

ModelOutcome run_model(const NetworkCase& net, const AdmittanceModel& adm, const DcSolution& dc, FlowVariant variant,
                       const CaseOptions& opts, bool want_log) {
  const FlowMode mode = variant == FlowVariant::TRIG ? FlowMode::trig()
                                                     : FlowMode::allpass(rotation_refs(dc, net, adm), opts.kernel);
  const OpfProblem problem = assemble(net, adm, mode);
  IpmOptions ipm = opts.ipm;
  std::ostringstream log;
  if (want_log) {
    ipm.log = &log;
    log << fmt::format("# {} {} (pre-rotation {})\n", net.name, to_string(variant), to_string(dc.mode));
    log << "iter         mu     inf_pr     inf_du      compl        reg   alpha_pr   alpha_du         objective   reg_dual\n";
  }
  ModelOutcome m;
  m.variant = variant;
  m.result = solve(problem, ipm, problem.initial_point(&dc));
  m.solution = problem.extract(m.result.x);
  m.true_ac = evaluate_true_ac(net, adm, m.solution);
  m.feasibility = feasibility_check(m.true_ac, net, m.solution, opts.tolerances);
  m.binding = summarize_binding(problem, m.result, opts.tolerances.binding_tol);
  m.max_angle = max_angle_difference(net, m.solution);
  m.log = log.str();
  return m;
}

ModelRun as_run(const ModelOutcome& m, std::string label) {
  return {std::move(label), m.result.objective, m.result.iterations, m.result.timings.total, m.solution, m.binding};
}

void fail(CaseOutcome& out, ErrorCategory cat, std::string message) {
  if (out.error) return;
  out.error = cat;
  out.exit_code = exit_code_for(cat);
  out.message = std::move(message);
}

}  // namespace

CaseOutcome solve_case(const NetworkCase& raw, const CaseOptions& opts, bool want_log) {
  CaseOutcome out;
  out.name = raw.name;
  try {
    opts.ipm.validate();
    opts.tolerances.validate();
    validate(opts.kernel);
    const NetworkCase net = scale_line_ratings(prepare_case(raw), opts.rate_scale_m);
    out.n_bus = static_cast<int>(net.num_buses());
    out.n_gen = static_cast<int>(net.gens.size());
    out.n_branch = static_cast<int>(net.branches.size());
    const AdmittanceModel adm = build_admittance(net);

    DcSolution dc;
    try {
      dc = solve_prerotation(net, opts.prerotation, opts.ipm);
    } catch (const Error& e) {
      if (opts.prerotation != PreRotation::DCOPF) throw;
      out.notes.push_back(fmt::format("DC OPF pre-rotation failed ({}); fell back to DC power flow", e.what()));
      dc = solve_dc_pf(net);
    }
    out.prerotation_used = dc.mode;

    if (opts.model != ModelChoice::APF) out.ac = run_model(net, adm, dc, FlowVariant::TRIG, opts, want_log);
    if (opts.model != ModelChoice::AC) out.apf = run_model(net, adm, dc, FlowVariant::ALLPASS, opts, want_log);

    for (const auto* m : {&out.ac, &out.apf}) {
      if (*m && (*m)->result.status != SolveStatus::OPTIMAL) {
        fail(out, ErrorCategory::Solve,
             fmt::format("{} solve ended with {}: {}", to_string((*m)->variant), to_string((*m)->result.status),
                         (*m)->result.message));
      }
    }
    if (out.ac && out.apf) {
      out.comparison = compare(as_run(*out.ac, "ac"), as_run(*out.apf, "apf"), net, adm);
      if (!out.error && !out.apf->feasibility.pass) {
        fail(out, ErrorCategory::Audit, "APF solution fails the exact AC feasibility audit");
      }
    }
  } catch (const Error& e) {
    fail(out, e.category(), e.what());
  } catch (const std::exception& e) {
    fail(out, ErrorCategory::Numeric, e.what());
  }
  return out;
}

CaseOutcome solve_case_file(const std::string& path, const CaseOptions& opts, bool want_log) {
  try {
    CaseOutcome out = solve_case(load_matpower_file(path), opts, want_log);
    out.source = path;
    return out;
  } catch (const Error& e) {
    CaseOutcome out;
    out.name = std::filesystem::path(path).stem().string();
    out.source = path;
    fail(out, e.category(), e.what());
    return out;
  }
}

void RunConfig::validate() const {
  if (a_params.size() > 1) {
    throw Error(ErrorCategory::Usage,
                "a_params with more than one pole is not supported: only the first-order all-pass kernel is "
                "defined, and no cascade rule for several poles is specified");
  }
  if (jobs < 1) throw Error(ErrorCategory::Usage, "jobs must be at least 1");
  if (case_paths.empty() && !emit_kernel_samples) {
    throw Error(ErrorCategory::Usage, "nothing to do: give at least one case or request kernel samples");
  }
  if (!(options.rate_scale_m >= 0.0 && options.rate_scale_m < 100.0)) {
    throw Error(ErrorCategory::Usage, "rate scaling m must lie in [0, 100)");
  }
  apfopf::validate(a_params.empty() ? options.kernel : KernelParam{a_params.front()});
  options.ipm.validate();
  options.tolerances.validate();
  if (!(kernel_grid.step > 0.0) || !(kernel_grid.stop >= kernel_grid.start)) {
    throw Error(ErrorCategory::Usage, "kernel sample range needs start <= stop and step > 0");
  }
}

namespace {

json solution_json(const OpfSolution& s) {
  auto vec = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (double x : v) a.push_back(detail::number(x));
    return a;
  };
  return {{"vm_pu", vec(s.vm)}, {"va_rad", vec(s.theta)}, {"pg_pu", vec(s.pg)}, {"qg_pu", vec(s.qg)}};
}

json model_json(const ModelOutcome& m, bool keep_solution) {
  const auto& r = m.result;
  json j = {{"variant", to_string(m.variant)},
            {"status", to_string(r.status)},
            {"objective", detail::number(r.objective)},
            {"iterations", r.iterations},
            {"residuals",
             {{"primal", detail::number(r.residuals.primal)},
              {"dual", detail::number(r.residuals.dual)},
              {"complementarity", detail::number(r.residuals.complementarity)}}},
            {"timings",
             {{"assembly_seconds", r.timings.assembly},
              {"factorization_seconds", r.timings.factorization},
              {"total_seconds", r.timings.total}}},
            {"max_angle_diff_rad", detail::number(m.max_angle)},
            {"max_angle_diff_deg", detail::number(m.max_angle * 180.0 / std::numbers::pi)},
            {"binding",
             {{"flow_from", m.binding.flow_from},
              {"flow_to", m.binding.flow_to},
              {"angle", m.binding.angle},
              {"congested_lines", detail::json_of(m.binding.congested)}}},
            {"feasibility", detail::json_of(m.feasibility)},
            {"message", r.message}};
  if (keep_solution) j["solution"] = solution_json(m.solution);
  return j;
}

json case_json(const CaseOutcome& c, const CaseOptions& opts) {
  json j = {{"case", c.name},
            {"source", c.source},
            {"n_bus", c.n_bus},
            {"n_gen", c.n_gen},
            {"n_branch", c.n_branch},
            {"model", to_string(opts.model)},
            {"prerotation_requested", to_string(opts.prerotation)},
            {"prerotation_used", to_string(c.prerotation_used)},
            {"kernel_a", opts.kernel.a},
            {"rate_scale_m", opts.rate_scale_m},
            {"notes", c.notes},
            {"exit_code", c.exit_code},
            {"error_category", c.error ? json(std::string(to_string(*c.error))) : json()},
            {"message", c.message}};
  json models = json::object();
  if (c.ac) models["ac"] = model_json(*c.ac, opts.keep_solution);
  if (c.apf) models["apf"] = model_json(*c.apf, opts.keep_solution);
  j["models"] = models;
  j["comparison"] = c.comparison ? detail::json_of(*c.comparison) : json();
  return j;
}

std::string case_text(const CaseOutcome& c) {
  std::string out = fmt::format("== {} ({} buses, {} generators, {} branches, pre-rotation {})\n", c.name, c.n_bus,
                                c.n_gen, c.n_branch, to_string(c.prerotation_used));
  for (const auto& note : c.notes) out += fmt::format("note: {}\n", note);
  for (const auto* m : {&c.ac, &c.apf}) {
    if (!*m) continue;
    const auto& r = (*m)->result;
    out += fmt::format("{:<7} {:<19} objective {:.6f}  iterations {}  time {:.3f} s  max angle {:.2f} deg\n",
                       to_string((*m)->variant), to_string(r.status), r.objective, r.iterations, r.timings.total,
                       (*m)->max_angle * 180.0 / std::numbers::pi);
  }
  if (c.comparison) out += render_text(*c.comparison);
  if (c.apf) out += "APF " + render_text(c.apf->feasibility);
  if (c.error) out += fmt::format("error [{}]: {}\n", to_string(*c.error), c.message);
  return out;
}

std::string per_case_path(const std::string& path, const std::string& name, bool multi) {
  if (!multi || path == "-") return path;
  std::filesystem::path p(path);
  const std::string stem = p.stem().string();
  p.replace_filename(stem + "." + name + p.extension().string());
  return p.string();
}

void write_to(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorCategory::Usage, fmt::format("cannot write {}", path));
  f << content;
}

void write_dumps(const RunConfig& cfg, const CaseOutcome& c, bool multi) {
  if (cfg.dump_case_json.empty() && cfg.dump_dc_csv.empty() && cfg.dump_constraints_csv.empty()) return;
  if (c.error && c.n_bus == 0) return;
  const NetworkCase net =
      scale_line_ratings(prepare_case(load_matpower_file(c.source)), cfg.options.rate_scale_m);
  if (!cfg.dump_case_json.empty()) write_to(per_case_path(cfg.dump_case_json, c.name, multi), case_to_json(net));
  const AdmittanceModel adm = build_admittance(net);
  DcSolution dc;
  if (c.prerotation_used == PreRotation::DCOPF) {
    dc = solve_dc_opf(net, cfg.options.ipm);
  } else {
    dc = solve_prerotation(net, c.prerotation_used, cfg.options.ipm);
  }
  const RotationTable table = rotation_refs(dc, net, adm);
  if (!cfg.dump_dc_csv.empty()) {
    std::ostringstream s;
    write_dc_csv(s, net, table);
    write_to(per_case_path(cfg.dump_dc_csv, c.name, multi), s.str());
  }
  if (!cfg.dump_constraints_csv.empty()) {
    const ModelOutcome* m = c.apf ? &*c.apf : (c.ac ? &*c.ac : nullptr);
    if (!m) return;
    const FlowMode mode = m->variant == FlowVariant::TRIG ? FlowMode::trig() : FlowMode::allpass(table, cfg.options.kernel);
    const OpfProblem problem = assemble(net, adm, mode);
    std::ostringstream s;
    problem.write_constraint_csv(s, problem.pack(m->solution));
    write_to(per_case_path(cfg.dump_constraints_csv, c.name, multi), s.str());
  }
}

}  // namespace

std::string report_json(const std::vector<CaseOutcome>& cases, const CaseOptions& opts, int exit_code) {
  json j = {{"schema", "apfopf.report/1"},
            {"units", {{"power", "pu"}, {"voltage", "pu"}, {"angle", "rad"}, {"objective", "$/h"}}},
            {"exit_code", exit_code}};
  std::optional<ErrorCategory> first;
  json arr = json::array();
  for (const auto& c : cases) {
    arr.push_back(case_json(c, opts));
    if (!first && c.error) first = c.error;
  }
  j["error_category"] = first ? json(std::string(to_string(*first))) : json();
  j["cases"] = arr;
  return j.dump(1);
}

RunReport run(const RunConfig& cfg) {
  cfg.validate();
  CaseOptions opts = cfg.options;
  if (!cfg.a_params.empty()) opts.kernel.a = cfg.a_params.front();
  opts.ipm.keep_trace = opts.ipm.keep_trace || !cfg.trace_path.empty();
  const bool want_log = !cfg.log_path.empty();

  RunReport report;
  if (cfg.emit_kernel_samples) {
    std::ostringstream s;
    write_kernel_samples(s, cfg.kernel_grid, opts.kernel);
    write_to(cfg.kernel_csv_path.empty() ? "-" : cfg.kernel_csv_path, s.str());
  }

  report.cases.resize(cfg.case_paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.case_paths.size(); i = next++) {
      report.cases[i] = solve_case_file(cfg.case_paths[i], opts, want_log);
    }
  };
  const int workers = std::min<int>(cfg.jobs, static_cast<int>(cfg.case_paths.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const bool multi = cfg.case_paths.size() > 1;
  std::string logs;
  json traces = json::object();
  for (auto& c : report.cases) {
    if (report.exit_code == kExitOk) report.exit_code = c.exit_code;
    report.text += case_text(c);
    for (const auto* m : {&c.ac, &c.apf}) {
      if (!*m) continue;
      logs += (*m)->log;
      if (!cfg.trace_path.empty()) {
        traces[c.name][std::string(to_string((*m)->variant))] = json::parse(trace_to_json((*m)->result.trace));
      }
    }
    try {
      write_dumps(cfg, c, multi);
    } catch (const Error& e) {
      c.notes.push_back(fmt::format("debug dump failed: {}", e.what()));
    }
  }
  report.json = report_json(report.cases, opts, report.exit_code);

  if (!cfg.json_path.empty()) write_to(cfg.json_path, report.json + "\n");
  if (!cfg.text_path.empty()) write_to(cfg.text_path, report.text);
  if (want_log) {
    if (cfg.log_path == "-") {
      std::cerr << logs;
    } else {
      write_to(cfg.log_path, logs);
    }
  }
  if (!cfg.trace_path.empty()) write_to(cfg.trace_path, traces.dump(1) + "\n");
  return report;
}

}  // namespace apfopf
