#include "apfopf/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/core.h>

#include "apfopf/error.hpp"

namespace apfopf {

std::string_view to_string(FlowVariant v) noexcept {
  return v == FlowVariant::TRIG ? "TRIG" : "ALLPASS";
}

std::string_view to_string(IneqKind k) noexcept {
  switch (k) {
    case IneqKind::FLOW_FROM: return "flow_from";
    case IneqKind::FLOW_TO: return "flow_to";
    case IneqKind::ANGLE_MAX: return "angle_max";
    case IneqKind::ANGLE_MIN: return "angle_min";
  }
  return "unknown";
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// F(theta_a, theta_b, V_a, V_b) = c0 V_a^2 + y V_a V_b k(theta_a - theta_b).
struct Local {
  int col[4] = {-1, -1, -1, -1};
  double val = 0.0;
  double grad[4] = {0.0, 0.0, 0.0, 0.0};
  double hess[4][4] = {};
};

void fill_term(Local& L, double c0, double y, double k, double dk, double d2k, double va, double vb) {
  const double vv = y * va * vb;
  L.val = c0 * va * va + vv * k;
  L.grad[0] = vv * dk;
  L.grad[1] = -vv * dk;
  L.grad[2] = 2.0 * c0 * va + y * vb * k;
  L.grad[3] = y * va * k;
  L.hess[0][0] = vv * d2k;
  L.hess[0][1] = -vv * d2k;
  L.hess[1][1] = vv * d2k;
  L.hess[0][2] = y * vb * dk;
  L.hess[0][3] = y * va * dk;
  L.hess[1][2] = -y * vb * dk;
  L.hess[1][3] = -y * va * dk;
  L.hess[2][2] = 2.0 * c0;
  L.hess[2][3] = y * k;
  L.hess[3][3] = 0.0;
  for (int m = 0; m < 4; ++m) {
    for (int l = 0; l < m; ++l) L.hess[m][l] = L.hess[l][m];
  }
}

void scatter_grad(Triplets& t, int row, const Local& L, double scale) {
  for (int m = 0; m < 4; ++m) {
    if (L.col[m] >= 0) t.emplace_back(row, L.col[m], scale * L.grad[m]);
  }
}

void scatter_hess(Triplets& t, const Local& L, const double (&h)[4][4], double w) {
  for (int m = 0; m < 4; ++m) {
    if (L.col[m] < 0) continue;
    for (int l = 0; l < 4; ++l) {
      if (L.col[l] < 0 || L.col[l] > L.col[m]) continue;
      if (L.col[l] == L.col[m] && l != m) continue;
      t.emplace_back(L.col[m], L.col[l], w * h[m][l]);
    }
  }
}

}  // namespace

OpfProblem::OpfProblem(NetworkCase network, AdmittanceModel adm, FlowMode mode)
    : net_(std::move(network)), adm_(std::move(adm)), mode_(std::move(mode)) {
  const int n = static_cast<int>(net_.num_buses());
  layout_.n_bus = n;
  layout_.n_gen = static_cast<int>(net_.gens.size());
  layout_.ref = net_.ref_bus();
  if (layout_.ref < 0) throw Error(ErrorCategory::Assembly, "case has no reference bus");
  if (adm_.n != n || adm_.branches.size() != net_.branches.size()) {
    throw Error(ErrorCategory::Assembly, "admittance model does not match the case");
  }
  layout_.theta_col.assign(n, -1);
  int col = 0;
  for (int i = 0; i < n; ++i) {
    if (i != layout_.ref) layout_.theta_col[i] = col++;
  }
  layout_.v_start = col;
  layout_.pg_start = layout_.v_start + n;
  layout_.qg_start = layout_.pg_start + layout_.n_gen;
  layout_.size = layout_.qg_start + layout_.n_gen;

  lo_.resize(layout_.size);
  hi_.resize(layout_.size);
  for (int i = 0; i < n; ++i) {
    if (layout_.theta(i) >= 0) {
      lo_[layout_.theta(i)] = -std::numbers::pi;
      hi_[layout_.theta(i)] = std::numbers::pi;
    }
    lo_[layout_.v(i)] = net_.buses[i].v_min;
    hi_[layout_.v(i)] = net_.buses[i].v_max;
  }
  for (int k = 0; k < layout_.n_gen; ++k) {
    const auto& g = net_.gens[k];
    if (!g.in_service) throw Error(ErrorCategory::Assembly, "case must be prepared before assembly (off generator)");
    lo_[layout_.pg(k)] = g.p_min;
    hi_[layout_.pg(k)] = g.p_max;
    lo_[layout_.qg(k)] = g.q_min;
    hi_[layout_.qg(k)] = g.q_max;
  }

  for (std::size_t k = 0; k < net_.branches.size(); ++k) {
    const auto& br = net_.branches[k];
    if (!br.in_service) continue;
    const int b = static_cast<int>(k);
    if (br.rated()) {
      ineq_.push_back({IneqKind::FLOW_FROM, b});
      ineq_.push_back({IneqKind::FLOW_TO, b});
    }
    if (std::isfinite(br.ang_max)) ineq_.push_back({IneqKind::ANGLE_MAX, b});
    if (std::isfinite(br.ang_min)) ineq_.push_back({IneqKind::ANGLE_MIN, b});
  }

  row_of_entry_.resize(adm_.entries.size());
  for (int i = 0; i < n; ++i) {
    for (int k = adm_.row_start[i]; k < adm_.row_start[i + 1]; ++k) row_of_entry_[k] = i;
  }

  if (mode_.variant == FlowVariant::ALLPASS) {
    validate(mode_.kernel);
    const auto& t = mode_.rotations;
    if (!t) throw Error(ErrorCategory::Assembly, "all-pass mode requires a rotation table");
    if (t->pair_refs.size() != adm_.entries.size() || t->branch_from.size() != net_.branches.size() ||
        t->branch_to.size() != net_.branches.size() || t->theta_dc.size() != n) {
      throw Error(ErrorCategory::Assembly, "rotation table does not cover the admittance pattern");
    }
  }
}

OpfProblem assemble(const NetworkCase& network, const AdmittanceModel& adm, const FlowMode& mode) {
  return OpfProblem(network, adm, mode);
}

template <bool Derivs>
void OpfProblem::evaluate(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd* lambda,
                          const Eigen::VectorXd* nu, EvalBundle& out, bool want_hessian) const {
  const int n = layout_.n_bus;
  const bool allpass = mode_.variant == FlowVariant::ALLPASS;
  const RotationTable* rot = allpass ? mode_.rotations.get() : nullptr;
  const bool hess = Derivs && want_hessian;

  auto theta = [&](int bus) { return layout_.theta(bus) >= 0 ? x[layout_.theta(bus)] : 0.0; };
  auto dc_diff = [&](int a, int b) { return rot->theta_dc[a] - rot->theta_dc[b]; };

  Triplets jh;
  Triplets jg;
  Triplets hs;
  if constexpr (Derivs) {
    out.grad_f = Eigen::VectorXd::Zero(layout_.size);
    jh.reserve(8 * adm_.entries.size() + 2 * layout_.n_gen);
    jg.reserve(8 * ineq_.size());
    if (hess) hs.reserve(20 * adm_.entries.size() + 20 * ineq_.size() + layout_.n_gen);
  }

  out.f = 0.0;
  for (int k = 0; k < layout_.n_gen; ++k) {
    const auto& c = net_.gens[k].cost;
    const double p = x[layout_.pg(k)];
    out.f += c.value(p);
    if constexpr (Derivs) {
      out.grad_f[layout_.pg(k)] = c.slope(p);
      if (hess) hs.emplace_back(layout_.pg(k), layout_.pg(k), 2.0 * obj_factor * c.c2);
    }
  }

  out.h = Eigen::VectorXd::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    out.h[i] = -net_.buses[i].p_load;
    out.h[n + i] = -net_.buses[i].q_load;
  }
  for (int k = 0; k < layout_.n_gen; ++k) {
    const int b = net_.gens[k].bus;
    out.h[b] += x[layout_.pg(k)];
    out.h[n + b] += x[layout_.qg(k)];
    if constexpr (Derivs) {
      jh.emplace_back(b, layout_.pg(k), 1.0);
      jh.emplace_back(n + b, layout_.qg(k), 1.0);
    }
  }

  Local L;
  for (std::size_t e = 0; e < adm_.entries.size(); ++e) {
    const int i = row_of_entry_[e];
    const int j = adm_.entries[e].col;
    const Polar y = adm_.entries[e].y;
    const double vi = x[layout_.v(i)];
    if (i == j) {
      // Diagonal kernel argument is -phi_ii in both variants.
      const double cp = y.mag * std::cos(y.ang);
      const double cq = -y.mag * std::sin(y.ang);
      out.h[i] -= cp * vi * vi;
      out.h[n + i] -= cq * vi * vi;
      if constexpr (Derivs) {
        jh.emplace_back(i, layout_.v(i), -2.0 * cp * vi);
        jh.emplace_back(n + i, layout_.v(i), -2.0 * cq * vi);
        if (hess) {
          const double w = -2.0 * (cp * (*lambda)[i] + cq * (*lambda)[n + i]);
          hs.emplace_back(layout_.v(i), layout_.v(i), w);
        }
      }
      continue;
    }
    const double dth = theta(i) - theta(j);
    const KernelEval K = allpass ? eval_rotated(rot->pair_refs[e], dth - dc_diff(i, j), mode_.kernel)
                                 : eval_trig(dth - y.ang);
    const double vj = x[layout_.v(j)];
    L.col[0] = layout_.theta(i);
    L.col[1] = layout_.theta(j);
    L.col[2] = layout_.v(i);
    L.col[3] = layout_.v(j);

    fill_term(L, 0.0, y.mag, K.c, K.dc, K.d2c, vi, vj);
    out.h[i] -= L.val;
    if constexpr (Derivs) {
      scatter_grad(jh, i, L, -1.0);
      if (hess) scatter_hess(hs, L, L.hess, -(*lambda)[i]);
    }
    fill_term(L, 0.0, y.mag, K.s, K.ds, K.d2s, vi, vj);
    out.h[n + i] -= L.val;
    if constexpr (Derivs) {
      scatter_grad(jh, n + i, L, -1.0);
      if (hess) scatter_hess(hs, L, L.hess, -(*lambda)[n + i]);
    }
  }

  out.g.resize(static_cast<Eigen::Index>(ineq_.size()));
  Local LP;
  Local LQ;
  for (std::size_t r = 0; r < ineq_.size(); ++r) {
    const auto& info = ineq_[r];
    const auto& br = net_.branches[info.branch];
    const int row = static_cast<int>(r);
    if (info.kind == IneqKind::ANGLE_MAX || info.kind == IneqKind::ANGLE_MIN) {
      const double sgn = info.kind == IneqKind::ANGLE_MAX ? 1.0 : -1.0;
      const double d = theta(br.from) - theta(br.to);
      out.g[r] = info.kind == IneqKind::ANGLE_MAX ? d - br.ang_max : br.ang_min - d;
      if constexpr (Derivs) {
        if (layout_.theta(br.from) >= 0) jg.emplace_back(row, layout_.theta(br.from), sgn);
        if (layout_.theta(br.to) >= 0) jg.emplace_back(row, layout_.theta(br.to), -sgn);
      }
      continue;
    }
    const bool from_side = info.kind == IneqKind::FLOW_FROM;
    const int a = from_side ? br.from : br.to;
    const int b = from_side ? br.to : br.from;
    const auto& ba = adm_.branches[info.branch];
    const Polar yself = from_side ? ba.y_ff : ba.y_tt;
    const Polar ymut = from_side ? ba.y_ft : ba.y_tf;
    const double dth = theta(a) - theta(b);
    KernelEval K;
    if (allpass) {
      const RotationRef& ref = from_side ? rot->branch_from[info.branch] : rot->branch_to[info.branch];
      K = eval_rotated(ref, dth - dc_diff(a, b), mode_.kernel);
    } else {
      K = eval_trig(dth - ymut.ang);
    }
    const double va = x[layout_.v(a)];
    const double vb = x[layout_.v(b)];
    for (Local* l : {&LP, &LQ}) {
      l->col[0] = layout_.theta(a);
      l->col[1] = layout_.theta(b);
      l->col[2] = layout_.v(a);
      l->col[3] = layout_.v(b);
    }
    fill_term(LP, yself.mag * std::cos(yself.ang), ymut.mag, K.c, K.dc, K.d2c, va, vb);
    fill_term(LQ, -yself.mag * std::sin(yself.ang), ymut.mag, K.s, K.ds, K.d2s, va, vb);
    const double P = LP.val;
    const double Q = LQ.val;
    out.g[r] = P * P + Q * Q - br.rate_a * br.rate_a;
    if constexpr (Derivs) {
      Local G = LP;
      for (int m = 0; m < 4; ++m) G.grad[m] = 2.0 * (P * LP.grad[m] + Q * LQ.grad[m]);
      scatter_grad(jg, row, G, 1.0);
      if (hess) {
        double H[4][4];
        for (int m = 0; m < 4; ++m) {
          for (int l = 0; l < 4; ++l) {
            H[m][l] = 2.0 * (LP.grad[m] * LP.grad[l] + P * LP.hess[m][l] + LQ.grad[m] * LQ.grad[l] +
                             Q * LQ.hess[m][l]);
          }
        }
        scatter_hess(hs, G, H, (*nu)[r]);
      }
    }
  }

  if (!std::isfinite(out.f)) throw Error(ErrorCategory::Numeric, "non-finite objective value");
  for (Eigen::Index r = 0; r < out.h.size(); ++r) {
    if (!std::isfinite(out.h[r])) throw Error(ErrorCategory::Numeric, fmt::format("non-finite equality constraint {}", r));
  }
  for (Eigen::Index r = 0; r < out.g.size(); ++r) {
    if (!std::isfinite(out.g[r])) throw Error(ErrorCategory::Numeric, fmt::format("non-finite inequality constraint {}", r));
  }

  if constexpr (Derivs) {
    out.jac_h.resize(2 * n, layout_.size);
    out.jac_h.setFromTriplets(jh.begin(), jh.end());
    out.jac_h.makeCompressed();
    out.jac_g.resize(static_cast<Eigen::Index>(ineq_.size()), layout_.size);
    out.jac_g.setFromTriplets(jg.begin(), jg.end());
    out.jac_g.makeCompressed();
    if (hess) {
      out.hessian.resize(layout_.size, layout_.size);
      out.hessian.setFromTriplets(hs.begin(), hs.end());
      out.hessian.makeCompressed();
    }
  }
}

void OpfProblem::eval(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                      const Eigen::VectorXd& nu, EvalBundle& out, bool want_hessian) const {
  if (x.size() != layout_.size) throw Error(ErrorCategory::Numeric, "evaluation point has the wrong dimension");
  if (want_hessian && (lambda.size() != num_eq() || nu.size() != num_ineq())) {
    throw Error(ErrorCategory::Numeric, "multiplier vectors have the wrong dimension");
  }
  evaluate<true>(x, obj_factor, &lambda, &nu, out, want_hessian);
}

void OpfProblem::eval_values(const Eigen::VectorXd& x, double& f, Eigen::VectorXd& h, Eigen::VectorXd& g) const {
  if (x.size() != layout_.size) throw Error(ErrorCategory::Numeric, "evaluation point has the wrong dimension");
  EvalBundle b;
  evaluate<false>(x, 1.0, nullptr, nullptr, b, false);
  f = b.f;
  h = std::move(b.h);
  g = std::move(b.g);
}

Eigen::VectorXd OpfProblem::initial_point(const DcSolution* dc) const {
  constexpr double kMargin = 1e-4;
  Eigen::VectorXd x(layout_.size);
  for (int i = 0; i < layout_.n_bus; ++i) {
    if (layout_.theta(i) >= 0) x[layout_.theta(i)] = dc ? dc->theta_dc[i] - dc->theta_dc[layout_.ref] : 0.0;
    x[layout_.v(i)] = 1.0;
  }
  for (int k = 0; k < layout_.n_gen; ++k) {
    for (int c : {layout_.pg(k), layout_.qg(k)}) {
      const bool both = std::isfinite(lo_[c]) && std::isfinite(hi_[c]);
      x[c] = both ? 0.5 * (lo_[c] + hi_[c]) : 0.0;
    }
  }
  for (int c = 0; c < layout_.size; ++c) {
    if (!(lo_[c] < hi_[c])) {
      throw Error(ErrorCategory::Assembly,
                  fmt::format("empty interior: variable {} has bounds [{}, {}]", c, lo_[c], hi_[c]));
    }
    const double m = std::min(kMargin, 0.25 * (hi_[c] - lo_[c]));
    x[c] = std::clamp(x[c], lo_[c] + m, hi_[c] - m);
  }
  return x;
}

OpfSolution OpfProblem::extract(const Eigen::VectorXd& x) const {
  OpfSolution s;
  s.theta = Eigen::VectorXd::Zero(layout_.n_bus);
  s.vm.resize(layout_.n_bus);
  for (int i = 0; i < layout_.n_bus; ++i) {
    if (layout_.theta(i) >= 0) s.theta[i] = x[layout_.theta(i)];
    s.vm[i] = x[layout_.v(i)];
  }
  s.pg = x.segment(layout_.pg_start, layout_.n_gen);
  s.qg = x.segment(layout_.qg_start, layout_.n_gen);
  return s;
}

Eigen::VectorXd OpfProblem::pack(const OpfSolution& s) const {
  Eigen::VectorXd x(layout_.size);
  for (int i = 0; i < layout_.n_bus; ++i) {
    if (layout_.theta(i) >= 0) x[layout_.theta(i)] = s.theta[i] - s.theta[layout_.ref];
    x[layout_.v(i)] = s.vm[i];
  }
  x.segment(layout_.pg_start, layout_.n_gen) = s.pg;
  x.segment(layout_.qg_start, layout_.n_gen) = s.qg;
  return x;
}

void OpfProblem::write_constraint_csv(std::ostream& out, const Eigen::VectorXd& x) const {
  double f = 0.0;
  Eigen::VectorXd h;
  Eigen::VectorXd g;
  eval_values(x, f, h, g);
  const int n = layout_.n_bus;
  out << "kind,index,label,value\n";
  out << fmt::format("objective,0,cost,{:.17g}\n", f);
  for (int i = 0; i < n; ++i) out << fmt::format("eq,{},p_balance_bus{},{:.17g}\n", i, net_.buses[i].id, h[i]);
  for (int i = 0; i < n; ++i) out << fmt::format("eq,{},q_balance_bus{},{:.17g}\n", n + i, net_.buses[i].id, h[n + i]);
  for (std::size_t r = 0; r < ineq_.size(); ++r) {
    const auto& br = net_.branches[ineq_[r].branch];
    out << fmt::format("ineq,{},{}_{}_{}_{},{:.17g}\n", r, to_string(ineq_[r].kind), ineq_[r].branch,
                       net_.buses[br.from].id, net_.buses[br.to].id, g[r]);
  }
}

}  // namespace apfopf
