#include "apfopf/dcflow.hpp"

#include <cmath>
#include <ostream>

#include <Eigen/SparseLU>
#include <fmt/core.h>

#include "apfopf/error.hpp"

namespace apfopf {

std::string_view to_string(PreRotation mode) noexcept {
  switch (mode) {
    case PreRotation::DCPF: return "dcpf";
    case PreRotation::DCOPF: return "dcopf";
    case PreRotation::NONE: return "none";
  }
  return "none";
}

PreRotation parse_prerotation(std::string_view text) {
  if (text == "dcpf") return PreRotation::DCPF;
  if (text == "dcopf") return PreRotation::DCOPF;
  if (text == "none") return PreRotation::NONE;
  throw Error(ErrorCategory::Usage, fmt::format("unknown pre-rotation '{}' (dcpf, dcopf, none)", text));
}

DcModel build_dc_model(const NetworkCase& net) {
  const int n = static_cast<int>(net.num_buses());
  DcModel m;
  m.p_shift = Eigen::VectorXd::Zero(n);
  m.b_branch.assign(net.branches.size(), 0.0);
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    if (!br.in_service) continue;
    const double b = 1.0 / (br.x * br.tap);
    m.b_branch[k] = b;
    trip.emplace_back(br.from, br.from, b);
    trip.emplace_back(br.to, br.to, b);
    trip.emplace_back(br.from, br.to, -b);
    trip.emplace_back(br.to, br.from, -b);
    m.p_shift[br.from] -= b * br.shift;
    m.p_shift[br.to] += b * br.shift;
  }
  m.bbus.resize(n, n);
  m.bbus.setFromTriplets(trip.begin(), trip.end());
  m.bbus.makeCompressed();
  return m;
}

namespace {

Eigen::VectorXd net_injection(const NetworkCase& net, const DcModel& m) {
  const int n = static_cast<int>(net.num_buses());
  Eigen::VectorXd p(n);
  for (int i = 0; i < n; ++i) p[i] = -net.buses[i].p_load - net.buses[i].g_shunt - m.p_shift[i];
  for (const auto& g : net.gens) {
    if (g.in_service) p[g.bus] += g.p_init;
  }
  return p;
}

// Maps bus index to its position among the non-reference buses.
std::vector<int> reduced_index(int n, int ref) {
  std::vector<int> idx(n, -1);
  for (int i = 0, k = 0; i < n; ++i) {
    if (i != ref) idx[i] = k++;
  }
  return idx;
}

int require_ref(const NetworkCase& net) {
  const int ref = net.ref_bus();
  if (ref < 0) throw Error(ErrorCategory::Validation, "case has no reference bus");
  return ref;
}

class DcOpfProblem final : public Nlp {
 public:
  DcOpfProblem(const NetworkCase& net, const DcModel& model) : net_(net) {
    n_bus_ = static_cast<int>(net.num_buses());
    ref_ = require_ref(net);
    col_ = reduced_index(n_bus_, ref_);
    for (std::size_t k = 0; k < net.gens.size(); ++k) {
      if (net.gens[k].in_service) gens_.push_back(static_cast<int>(k));
    }
    nv_ = n_bus_ - 1 + static_cast<int>(gens_.size());
    lo_ = Eigen::VectorXd::Constant(nv_, -kInf);
    hi_ = Eigen::VectorXd::Constant(nv_, kInf);
    for (std::size_t k = 0; k < gens_.size(); ++k) {
      lo_[n_bus_ - 1 + k] = net.gens[gens_[k]].p_min;
      hi_[n_bus_ - 1 + k] = net.gens[gens_[k]].p_max;
    }
    p_fixed_ = Eigen::VectorXd(n_bus_);
    for (int i = 0; i < n_bus_; ++i) p_fixed_[i] = -net.buses[i].p_load - net.buses[i].g_shunt - model.p_shift[i];

    // Rows: branch flow upper, flow lower (rated), angle max, angle min (finite).
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      const auto& br = net.branches[k];
      if (!br.in_service) continue;
      const double b = model.b_branch[k];
      if (br.rated()) {
        rows_.push_back({br.from, br.to, b, -b * br.shift - br.rate_a});
        rows_.push_back({br.from, br.to, -b, b * br.shift - br.rate_a});
      }
      if (std::isfinite(br.ang_max)) rows_.push_back({br.from, br.to, 1.0, -br.ang_max});
      if (std::isfinite(br.ang_min)) rows_.push_back({br.from, br.to, -1.0, br.ang_min});
    }

    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < model.bbus.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(model.bbus, k); it; ++it) {
        const int c = col_[it.col()];
        if (c >= 0) trip.emplace_back(static_cast<int>(it.row()), c, -it.value());
      }
    }
    for (std::size_t k = 0; k < gens_.size(); ++k) {
      trip.emplace_back(net.gens[gens_[k]].bus, n_bus_ - 1 + static_cast<int>(k), 1.0);
    }
    jac_h_.resize(n_bus_, nv_);
    jac_h_.setFromTriplets(trip.begin(), trip.end());
    jac_h_.makeCompressed();

    trip.clear();
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (col_[rows_[r].i] >= 0) trip.emplace_back(static_cast<int>(r), col_[rows_[r].i], rows_[r].coef);
      if (col_[rows_[r].j] >= 0) trip.emplace_back(static_cast<int>(r), col_[rows_[r].j], -rows_[r].coef);
    }
    jac_g_.resize(static_cast<Eigen::Index>(rows_.size()), nv_);
    jac_g_.setFromTriplets(trip.begin(), trip.end());
    jac_g_.makeCompressed();

    trip.clear();
    for (std::size_t k = 0; k < gens_.size(); ++k) {
      const int v = n_bus_ - 1 + static_cast<int>(k);
      trip.emplace_back(v, v, 1.0);
    }
    hess_pattern_.resize(nv_, nv_);
    hess_pattern_.setFromTriplets(trip.begin(), trip.end());
    hess_pattern_.makeCompressed();
  }

  int num_vars() const override { return nv_; }
  int num_eq() const override { return n_bus_; }
  int num_ineq() const override { return static_cast<int>(rows_.size()); }
  const Eigen::VectorXd& lower() const override { return lo_; }
  const Eigen::VectorXd& upper() const override { return hi_; }

  void eval(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd&, const Eigen::VectorXd&,
            EvalBundle& out, bool want_hessian) const override {
    out.f = 0.0;
    out.grad_f = Eigen::VectorXd::Zero(nv_);
    for (std::size_t k = 0; k < gens_.size(); ++k) {
      const auto& cost = net_.gens[gens_[k]].cost;
      const double p = x[n_bus_ - 1 + k];
      out.f += cost.value(p);
      out.grad_f[n_bus_ - 1 + k] = cost.slope(p);
    }
    out.h = jac_h_ * x + p_fixed_;
    out.g = jac_g_ * x;
    for (std::size_t r = 0; r < rows_.size(); ++r) out.g[r] += rows_[r].offset;
    out.jac_h = jac_h_;
    out.jac_g = jac_g_;
    if (want_hessian) {
      out.hessian = hess_pattern_;
      for (std::size_t k = 0; k < gens_.size(); ++k) {
        const int v = n_bus_ - 1 + static_cast<int>(k);
        out.hessian.coeffRef(v, v) = 2.0 * obj_factor * net_.gens[gens_[k]].cost.c2;
      }
    }
  }

  Eigen::VectorXd initial_point() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nv_);
    for (std::size_t k = 0; k < gens_.size(); ++k) {
      x[n_bus_ - 1 + k] = 0.5 * (lo_[n_bus_ - 1 + k] + hi_[n_bus_ - 1 + k]);
    }
    return x;
  }

  DcSolution extract(const Eigen::VectorXd& x) const {
    DcSolution dc;
    dc.mode = PreRotation::DCOPF;
    dc.theta_dc = Eigen::VectorXd::Zero(n_bus_);
    for (int i = 0; i < n_bus_; ++i) {
      if (col_[i] >= 0) dc.theta_dc[i] = x[col_[i]];
    }
    dc.dispatch = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.gens.size()));
    for (std::size_t k = 0; k < gens_.size(); ++k) dc.dispatch[gens_[k]] = x[n_bus_ - 1 + k];
    return dc;
  }

 private:
  struct Row {
    int i;
    int j;
    double coef;    // g = coef * (theta_i - theta_j) + offset
    double offset;
  };

  const NetworkCase& net_;
  int n_bus_ = 0;
  int ref_ = 0;
  int nv_ = 0;
  std::vector<int> col_;
  std::vector<int> gens_;
  std::vector<Row> rows_;
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  Eigen::VectorXd p_fixed_;
  SparseMatrix jac_h_;
  SparseMatrix jac_g_;
  SparseMatrix hess_pattern_;
};

}  // namespace

DcSolution solve_dc_pf(const NetworkCase& net) {
  const int n = static_cast<int>(net.num_buses());
  const int ref = require_ref(net);
  const DcModel m = build_dc_model(net);
  const Eigen::VectorXd p = net_injection(net, m);
  const std::vector<int> idx = reduced_index(n, ref);

  DcSolution dc;
  dc.mode = PreRotation::DCPF;
  dc.theta_dc = Eigen::VectorXd::Zero(n);
  if (n == 1) return dc;

  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < m.bbus.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m.bbus, k); it; ++it) {
      const int r = idx[it.row()];
      const int c = idx[it.col()];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  }
  Eigen::SparseMatrix<double> bred(n - 1, n - 1);
  bred.setFromTriplets(trip.begin(), trip.end());
  bred.makeCompressed();
  Eigen::VectorXd rhs(n - 1);
  for (int i = 0; i < n; ++i) {
    if (idx[i] >= 0) rhs[idx[i]] = p[i];
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(bred);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCategory::Numeric, "DC power flow matrix is singular (disconnected network?)");
  }
  const Eigen::VectorXd th = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !th.allFinite()) {
    throw Error(ErrorCategory::Numeric, "DC power flow solve failed");
  }
  for (int i = 0; i < n; ++i) {
    if (idx[i] >= 0) dc.theta_dc[i] = th[idx[i]];
  }
  return dc;
}

double dc_pf_residual(const NetworkCase& net, const DcSolution& dc) {
  const int ref = require_ref(net);
  const DcModel m = build_dc_model(net);
  Eigen::VectorXd r = m.bbus * dc.theta_dc - net_injection(net, m);
  r[ref] = 0.0;
  return r.lpNorm<Eigen::Infinity>();
}

DcSolution solve_dc_opf(const NetworkCase& net, const IpmOptions& opts) {
  const DcModel m = build_dc_model(net);
  const DcOpfProblem qp(net, m);
  const SolveResult r = solve(qp, opts, qp.initial_point());
  if (r.status != SolveStatus::OPTIMAL) {
    throw Error(ErrorCategory::Solve, fmt::format("DC OPF did not converge: {}", r.message));
  }
  DcSolution dc = qp.extract(r.x);
  dc.objective = r.objective;
  dc.iterations = r.iterations;
  return dc;
}

DcSolution zero_rotation(const NetworkCase& net) {
  DcSolution dc;
  dc.mode = PreRotation::NONE;
  dc.theta_dc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_buses()));
  return dc;
}

DcSolution solve_prerotation(const NetworkCase& net, PreRotation mode, const IpmOptions& opts) {
  switch (mode) {
    case PreRotation::DCPF: return solve_dc_pf(net);
    case PreRotation::DCOPF: return solve_dc_opf(net, opts);
    case PreRotation::NONE: break;
  }
  return zero_rotation(net);
}

RotationTable rotation_refs(const DcSolution& dc, const NetworkCase& net, const AdmittanceModel& adm) {
  RotationTable t;
  t.theta_dc = dc.theta_dc;
  const auto& th = dc.theta_dc;
  t.pair_refs.resize(adm.entries.size());
  for (int i = 0; i < adm.n; ++i) {
    for (int k = adm.row_start[i]; k < adm.row_start[i + 1]; ++k) {
      const int j = adm.entries[k].col;
      const double d = i == j ? -adm.entries[k].y.ang : th[i] - th[j] - adm.entries[k].y.ang;
      t.pair_refs[k] = RotationRef::at(d);
    }
  }
  t.branch_from.resize(net.branches.size());
  t.branch_to.resize(net.branches.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    const auto& ya = adm.branches[k];
    t.branch_from[k] = RotationRef::at(th[br.from] - th[br.to] - ya.y_ft.ang);
    t.branch_to[k] = RotationRef::at(th[br.to] - th[br.from] - ya.y_tf.ang);
  }
  return t;
}

void write_dc_csv(std::ostream& out, const NetworkCase& net, const RotationTable& table) {
  out << "record,index,i,j,value_rad\n";
  for (Eigen::Index i = 0; i < table.theta_dc.size(); ++i) {
    out << fmt::format("theta,{},{},{},{:.17g}\n", i, net.buses[i].id, net.buses[i].id, table.theta_dc[i]);
  }
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const int fi = net.buses[net.branches[k].from].id;
    const int ti = net.buses[net.branches[k].to].id;
    out << fmt::format("delta_from,{},{},{},{:.17g}\n", k, fi, ti, table.branch_from[k].delta_dc);
    out << fmt::format("delta_to,{},{},{},{:.17g}\n", k, ti, fi, table.branch_to[k].delta_dc);
  }
}

}  // namespace apfopf
