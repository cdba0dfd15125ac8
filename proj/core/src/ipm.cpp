#include "apfopf/ipm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/core.h>
#include <json.hpp>

#include "apfopf/error.hpp"

namespace apfopf {

void Nlp::eval_values(const Eigen::VectorXd& x, double& f, Eigen::VectorXd& h, Eigen::VectorXd& g) const {
  EvalBundle b;
  const Eigen::VectorXd lam = Eigen::VectorXd::Zero(num_eq());
  const Eigen::VectorXd nu = Eigen::VectorXd::Zero(num_ineq());
  eval(x, 1.0, lam, nu, b, false);
  f = b.f;
  h = std::move(b.h);
  g = std::move(b.g);
}

std::string_view to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::OPTIMAL: return "OPTIMAL";
    case SolveStatus::MAX_ITER: return "MAX_ITER";
    case SolveStatus::STEP_FAILURE: return "STEP_FAILURE";
    case SolveStatus::INFEASIBLE_DETECTED: return "INFEASIBLE_DETECTED";
  }
  return "UNKNOWN";
}

void IpmOptions::validate() const {
  auto bad = [](const char* what) { throw Error(ErrorCategory::Usage, std::string("invalid IPM option: ") + what); };
  if (!(sigma > 0.0 && sigma < 1.0)) bad("sigma must lie in (0, 1)");
  if (!(tau > 0.0 && tau < 1.0)) bad("tau must lie in (0, 1)");
  if (!(tol > 0.0)) bad("tol must be positive");
  if (!(mu0 > 0.0)) bad("mu0 must be positive");
  if (max_iter < 0) bad("max_iter must be non-negative");
  if (!(reg_min > 0.0 && reg_max >= reg_min)) bad("need 0 < reg_min <= reg_max");
  if (!(bound_relax >= 0.0)) bad("bound_relax must be non-negative");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kScaleMax = 100.0;  // multiplier scaling threshold for the error measure
constexpr double kMultiplierSafeguard = 1e10;

struct Residuals {
  Eigen::VectorXd grad_lag;
  KktResiduals norms;
};

Residuals compute_residuals(const ScaledBounds& bd, const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                            const Eigen::VectorXd& lambda, const Eigen::VectorXd& nu,
                            const Eigen::VectorXd& z_lo, const Eigen::VectorXd& z_hi, const EvalBundle& b,
                            double mu) {
  Residuals r;
  r.grad_lag = bd.obj_scale * b.grad_f - z_lo + z_hi;
  if (b.jac_h.rows() > 0) r.grad_lag += b.jac_h.transpose() * lambda;
  if (b.jac_g.rows() > 0) r.grad_lag += b.jac_g.transpose() * nu;

  double primal = b.h.size() ? b.h.lpNorm<Eigen::Infinity>() : 0.0;
  if (s.size()) primal = std::max(primal, (b.g + s).lpNorm<Eigen::Infinity>());

  double compl_max = 0.0;
  double mult_sum = lambda.lpNorm<1>() + nu.lpNorm<1>();
  double bound_mult_sum = nu.lpNorm<1>();
  int n_mult = static_cast<int>(lambda.size() + nu.size());
  int n_bound_mult = static_cast<int>(nu.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) compl_max = std::max(compl_max, std::abs(s[i] * nu[i] - mu));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isfinite(bd.lo[i])) {
      compl_max = std::max(compl_max, std::abs((x[i] - bd.lo[i]) * z_lo[i] - mu));
      mult_sum += std::abs(z_lo[i]);
      bound_mult_sum += std::abs(z_lo[i]);
      ++n_mult;
      ++n_bound_mult;
    }
    if (std::isfinite(bd.hi[i])) {
      compl_max = std::max(compl_max, std::abs((bd.hi[i] - x[i]) * z_hi[i] - mu));
      mult_sum += std::abs(z_hi[i]);
      bound_mult_sum += std::abs(z_hi[i]);
      ++n_mult;
      ++n_bound_mult;
    }
  }
  const double s_d = n_mult > 0 ? std::max(kScaleMax, mult_sum / n_mult) / kScaleMax : 1.0;
  const double s_c = n_bound_mult > 0 ? std::max(kScaleMax, bound_mult_sum / n_bound_mult) / kScaleMax : 1.0;
  r.norms.primal = primal;
  r.norms.dual = (r.grad_lag.size() ? r.grad_lag.lpNorm<Eigen::Infinity>() : 0.0) / s_d;
  r.norms.complementarity = compl_max / s_c;
  return r;
}

double max_norm(const KktResiduals& r) { return std::max({r.primal, r.dual, r.complementarity}); }

// Lower triangle of the condensed KKT matrix with explicit diagonal entries.
SparseMatrix assemble_kkt(const EvalBundle& b, const Eigen::VectorXd& sigma_x, const Eigen::VectorXd& d_s) {
  const int n = static_cast<int>(sigma_x.size());
  const int me = static_cast<int>(b.h.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(b.hessian.nonZeros() + b.jac_h.nonZeros() + n + me + 4 * b.jac_g.nonZeros());
  for (int i = 0; i < n + me; ++i) trip.emplace_back(i, i, i < n ? sigma_x[i] : 0.0);
  for (int k = 0; k < b.hessian.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(b.hessian, k); it; ++it) {
      const auto r = it.row();
      const auto c = it.col();
      if (r >= c) trip.emplace_back(static_cast<int>(r), static_cast<int>(c), it.value());
      else trip.emplace_back(static_cast<int>(c), static_cast<int>(r), it.value());
    }
  }
  if (b.jac_g.rows() > 0) {
    const SparseMatrix cond = SparseMatrix(b.jac_g.transpose()) * d_s.asDiagonal() * b.jac_g;
    for (int k = 0; k < cond.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(cond, k); it; ++it) {
        if (it.row() >= it.col()) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
  }
  for (int k = 0; k < b.jac_h.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(b.jac_h, k); it; ++it) {
      trip.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  SparseMatrix K(n + me, n + me);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  return K;
}

void shift_diagonal(SparseMatrix& K, const SparseMatrix& base, int n, double dw, double dc) {
  K = base;
  for (int i = 0; i < K.cols(); ++i) K.coeffRef(i, i) += i < n ? dw : -dc;
}

Eigen::VectorXd symmetric_multiply(const SparseMatrix& lower, const Eigen::VectorXd& v) {
  return lower.selfadjointView<Eigen::Lower>() * v;
}

Eigen::VectorXd solve_refined(const SparseLdlt& ldlt, const SparseMatrix& K, const Eigen::VectorXd& rhs,
                              int max_refinement) {
  Eigen::VectorXd sol = ldlt.solve(rhs);
  const double rhs_norm = rhs.lpNorm<Eigen::Infinity>();
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_refinement; ++it) {
    const Eigen::VectorXd res = rhs - symmetric_multiply(K, sol);
    const double rn = res.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(rn) || rn <= 1e-15 * std::max(1.0, rhs_norm) || rn >= 0.5 * prev) break;
    prev = rn;
    sol += ldlt.solve(res);
  }
  return sol;
}

}  // namespace

double fraction_to_boundary(const Eigen::VectorXd& value, const Eigen::VectorXd& delta, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    if (delta[i] < 0.0) alpha = std::min(alpha, -tau * value[i] / delta[i]);
  }
  return alpha;
}

Direction newton_step(const Nlp& nlp, const ScaledBounds& bd, const IterateState& st, const EvalBundle& b,
                      double mu, KktSystem& kkt, const IpmOptions& opts) {
  const int n = nlp.num_vars();
  const int me = nlp.num_eq();
  const int mi = nlp.num_ineq();

  Eigen::VectorXd sigma_x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd rhs_x = -bd.obj_scale * b.grad_f;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(bd.lo[i])) {
      const double dl = st.x[i] - bd.lo[i];
      sigma_x[i] += st.z_lo[i] / dl;
      rhs_x[i] += mu / dl;
    }
    if (std::isfinite(bd.hi[i])) {
      const double du = bd.hi[i] - st.x[i];
      sigma_x[i] += st.z_hi[i] / du;
      rhs_x[i] -= mu / du;
    }
  }
  const Eigen::VectorXd d_s = mi ? Eigen::VectorXd(st.nu.cwiseQuotient(st.s)) : Eigen::VectorXd();
  if (me) rhs_x -= b.jac_h.transpose() * st.lambda;
  if (mi) {
    const Eigen::VectorXd w = (mu * st.s.cwiseInverse()) + d_s.cwiseProduct(b.g + st.s);
    rhs_x -= b.jac_g.transpose() * w;
  }

  Eigen::VectorXd rhs(n + me);
  rhs.head(n) = rhs_x;
  if (me) rhs.tail(me) = -b.h;

  const auto t0 = Clock::now();
  const SparseMatrix base = assemble_kkt(b, sigma_x, d_s);
  if (!kkt.analyzed) {
    std::vector<int> signs(n + me, 1);
    std::fill(signs.begin() + n, signs.end(), -1);
    kkt.ldlt.analyze(base, signs);
    kkt.analyzed = true;
  }

  Direction dir;
  SparseMatrix K;
  double dw = 0.0;
  double dc = 0.0;
  for (;;) {
    shift_diagonal(K, base, n, dw, dc);
    ++dir.factorizations;
    const bool ok = kkt.ldlt.factorize(K);
    const Inertia in = kkt.ldlt.inertia();
    dir.inertia = in;
    if (ok && in.positive == n && in.negative == me && in.zero == 0) break;
    if (ok && in.zero > 0 && dc == 0.0 && me > 0) {
      dc = std::max(1e-8 * std::pow(mu, 0.25), opts.reg_min);
      continue;
    }
    if (dw == 0.0) {
      dw = kkt.last_reg == 0.0 ? opts.reg_min : std::max(opts.reg_min, kkt.last_reg / 4.0);
    } else {
      dw *= 2.0;
    }
    if (dw > opts.reg_max) {
      kkt.factor_seconds += seconds_since(t0);
      throw Error(ErrorCategory::Numeric,
                  fmt::format("KKT inertia correction failed: reached reg_max {} (inertia +{} -{} 0:{})",
                              opts.reg_max, in.positive, in.negative, in.zero));
    }
  }
  if (dw > 0.0) kkt.last_reg = dw;
  dir.reg_primal = dw;
  dir.reg_dual = dc;

  const Eigen::VectorXd sol = solve_refined(kkt.ldlt, K, rhs, opts.max_refinement);
  kkt.factor_seconds += seconds_since(t0);

  dir.dx = sol.head(n);
  dir.dlambda = sol.tail(me);
  if (mi) {
    dir.ds = -(b.g + st.s) - b.jac_g * dir.dx;
    dir.dnu = mu * st.s.cwiseInverse() - st.nu - d_s.cwiseProduct(dir.ds);
  } else {
    dir.ds.resize(0);
    dir.dnu.resize(0);
  }
  dir.dz_lo = Eigen::VectorXd::Zero(n);
  dir.dz_hi = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(bd.lo[i])) {
      const double dl = st.x[i] - bd.lo[i];
      dir.dz_lo[i] = mu / dl - st.z_lo[i] - st.z_lo[i] / dl * dir.dx[i];
    }
    if (std::isfinite(bd.hi[i])) {
      const double du = bd.hi[i] - st.x[i];
      dir.dz_hi[i] = mu / du - st.z_hi[i] + st.z_hi[i] / du * dir.dx[i];
    }
  }
  dir.curvature = dir.dx.dot(symmetric_multiply(b.hessian, dir.dx)) + dir.dx.dot(sigma_x.cwiseProduct(dir.dx));
  if (mi) dir.curvature += dir.ds.dot(d_s.cwiseProduct(dir.ds));
  return dir;
}

double merit_value(const ScaledBounds& bd, const MeritContext& ctx, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& s, double f, const Eigen::VectorXd& h, const Eigen::VectorXd& g) {
  double barrier = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(s[i] > 0.0)) return std::numeric_limits<double>::infinity();
    barrier -= std::log(s[i]);
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isfinite(bd.lo[i])) {
      const double dl = x[i] - bd.lo[i];
      if (!(dl > 0.0)) return std::numeric_limits<double>::infinity();
      barrier -= std::log(dl);
    }
    if (std::isfinite(bd.hi[i])) {
      const double du = bd.hi[i] - x[i];
      if (!(du > 0.0)) return std::numeric_limits<double>::infinity();
      barrier -= std::log(du);
    }
  }
  double infeas = h.lpNorm<1>();
  if (s.size()) infeas += (g + s).lpNorm<1>();
  const double v = ctx.obj_scale * f + ctx.mu * barrier + ctx.penalty * infeas;
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

double merit_slope(const ScaledBounds& bd, const MeritContext& ctx, const IterateState& st, const Direction& dir,
                   const Eigen::VectorXd& grad_f, double infeasibility_l1) {
  double slope = ctx.obj_scale * grad_f.dot(dir.dx);
  for (Eigen::Index i = 0; i < st.s.size(); ++i) slope -= ctx.mu * dir.ds[i] / st.s[i];
  for (Eigen::Index i = 0; i < st.x.size(); ++i) {
    if (std::isfinite(bd.lo[i])) slope -= ctx.mu * dir.dx[i] / (st.x[i] - bd.lo[i]);
    if (std::isfinite(bd.hi[i])) slope += ctx.mu * dir.dx[i] / (bd.hi[i] - st.x[i]);
  }
  return slope - ctx.penalty * infeasibility_l1;
}

StepLength step_length(const Nlp& nlp, const ScaledBounds& bd, const IterateState& st, const Direction& dir,
                       const MeritContext& ctx, double merit0, double slope, const IpmOptions& opts) {
  StepLength out;
  const Eigen::Index n = st.x.size();
  double alpha_p = 1.0;
  double alpha_d = 1.0;
  if (st.s.size()) {
    alpha_p = std::min(alpha_p, fraction_to_boundary(st.s, dir.ds, opts.tau));
    alpha_d = std::min(alpha_d, fraction_to_boundary(st.nu, dir.dnu, opts.tau));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(bd.lo[i])) {
      if (dir.dx[i] < 0.0) alpha_p = std::min(alpha_p, -opts.tau * (st.x[i] - bd.lo[i]) / dir.dx[i]);
      if (dir.dz_lo[i] < 0.0) alpha_d = std::min(alpha_d, -opts.tau * st.z_lo[i] / dir.dz_lo[i]);
    }
    if (std::isfinite(bd.hi[i])) {
      if (dir.dx[i] > 0.0) alpha_p = std::min(alpha_p, opts.tau * (bd.hi[i] - st.x[i]) / dir.dx[i]);
      if (dir.dz_hi[i] < 0.0) alpha_d = std::min(alpha_d, -opts.tau * st.z_hi[i] / dir.dz_hi[i]);
    }
  }
  out.alpha_max = alpha_p;
  out.alpha_dual = alpha_d;

  double alpha = alpha_p;
  double f = 0.0;
  Eigen::VectorXd h;
  Eigen::VectorXd g;
  while (alpha >= opts.min_step) {
    const Eigen::VectorXd xt = st.x + alpha * dir.dx;
    const Eigen::VectorXd stt = st.s.size() ? Eigen::VectorXd(st.s + alpha * dir.ds) : Eigen::VectorXd();
    nlp.eval_values(xt, f, h, g);
    const double phi = merit_value(bd, ctx, xt, stt, f, h, g);
    // changes at roundoff level of the merit are accepted
    const double noise = 10.0 * std::numeric_limits<double>::epsilon() * std::abs(merit0);
    if (std::isfinite(phi) && phi <= merit0 + opts.armijo * alpha * slope + noise) {
      out.alpha_primal = alpha;
      out.accepted = true;
      return out;
    }
    alpha *= 0.5;
    ++out.backtracks;
  }
  out.alpha_primal = alpha;
  return out;
}

SolveResult solve(const Nlp& nlp, const IpmOptions& opts, const Eigen::VectorXd& x0) {
  opts.validate();
  const auto t_start = Clock::now();
  const int n = nlp.num_vars();
  const int me = nlp.num_eq();
  const int mi = nlp.num_ineq();
  if (x0.size() != n) throw Error(ErrorCategory::Solve, "initial point has the wrong dimension");

  SolveResult res;
  ScaledBounds bd;
  bd.lo = nlp.lower();
  bd.hi = nlp.upper();
  for (int i = 0; i < n; ++i) {
    if (!(bd.lo[i] < bd.hi[i])) {
      throw Error(ErrorCategory::Solve, fmt::format("variable {} has an empty interior [{}, {}]", i, bd.lo[i], bd.hi[i]));
    }
    if (std::isfinite(bd.lo[i])) bd.lo[i] -= opts.bound_relax * std::max(1.0, std::abs(bd.lo[i]));
    if (std::isfinite(bd.hi[i])) bd.hi[i] += opts.bound_relax * std::max(1.0, std::abs(bd.hi[i]));
  }

  IterateState st;
  st.x = x0;
  for (int i = 0; i < n; ++i) {
    const double lo = bd.lo[i];
    const double hi = bd.hi[i];
    const double width = hi - lo;
    if (std::isfinite(lo)) {
      double push = opts.bound_push * std::max(1.0, std::abs(lo));
      if (std::isfinite(width)) push = std::min(push, opts.bound_push * width);
      st.x[i] = std::max(st.x[i], lo + push);
    }
    if (std::isfinite(hi)) {
      double push = opts.bound_push * std::max(1.0, std::abs(hi));
      if (std::isfinite(width)) push = std::min(push, opts.bound_push * width);
      st.x[i] = std::min(st.x[i], hi - push);
    }
  }

  EvalBundle b;
  auto t_eval = Clock::now();
  st.lambda = Eigen::VectorXd::Zero(me);
  st.nu = Eigen::VectorXd::Zero(mi);
  nlp.eval(st.x, 1.0, st.lambda, st.nu, b, false);
  res.timings.assembly += seconds_since(t_eval);

  const double gmax = b.grad_f.size() ? b.grad_f.lpNorm<Eigen::Infinity>() : 0.0;
  bd.obj_scale = gmax > opts.obj_scaling_max_grad ? opts.obj_scaling_max_grad / gmax : 1.0;

  st.mu = opts.mu0;
  st.s = Eigen::VectorXd(mi);
  for (int i = 0; i < mi; ++i) {
    st.s[i] = std::max(-b.g[i], opts.bound_push * std::max(1.0, std::abs(b.g[i])));
  }
  st.nu = mi ? Eigen::VectorXd(st.mu * st.s.cwiseInverse()) : Eigen::VectorXd();
  st.z_lo = Eigen::VectorXd::Zero(n);
  st.z_hi = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(bd.lo[i])) st.z_lo[i] = st.mu / (st.x[i] - bd.lo[i]);
    if (std::isfinite(bd.hi[i])) st.z_hi[i] = st.mu / (bd.hi[i] - st.x[i]);
  }

  KktSystem kkt;
  // Least-squares equality multipliers: [I J'; J 0] [w; lambda] = [-grad; 0].
  if (me > 0) {
    Eigen::VectorXd grad = bd.obj_scale * b.grad_f - st.z_lo + st.z_hi;
    if (mi) grad += b.jac_g.transpose() * st.nu;
    EvalBundle ls;
    ls.h = Eigen::VectorXd::Zero(me);
    ls.jac_h = b.jac_h;
    ls.hessian = SparseMatrix(n, n);
    SparseLdlt ldlt;
    const SparseMatrix K = assemble_kkt(ls, Eigen::VectorXd::Ones(n), Eigen::VectorXd());
    std::vector<int> signs(n + me, 1);
    std::fill(signs.begin() + n, signs.end(), -1);
    ldlt.analyze(K, signs);
    if (ldlt.factorize(K) && ldlt.inertia().zero == 0) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + me);
      rhs.head(n) = -grad;
      const Eigen::VectorXd sol = ldlt.solve(rhs);
      const Eigen::VectorXd lam = sol.tail(me);
      if (lam.allFinite() && lam.lpNorm<Eigen::Infinity>() <= 1e3) st.lambda = lam;
    }
  }

  MeritContext merit;
  merit.obj_scale = bd.obj_scale;
  const double mu_min = opts.tol / 10.0;

  res.status = SolveStatus::MAX_ITER;
  int iter = 0;
  for (;; ++iter) {
    t_eval = Clock::now();
    nlp.eval(st.x, bd.obj_scale, st.lambda, st.nu, b, true);
    res.timings.assembly += seconds_since(t_eval);

    const Residuals r0 = compute_residuals(bd, st.x, st.s, st.lambda, st.nu, st.z_lo, st.z_hi, b, 0.0);
    res.residuals = r0.norms;
    if (max_norm(r0.norms) <= opts.tol) {
      res.status = SolveStatus::OPTIMAL;
      break;
    }
    if (iter >= opts.max_iter) {
      res.status = SolveStatus::MAX_ITER;
      break;
    }
    while (st.mu > mu_min) {
      const Residuals rm = compute_residuals(bd, st.x, st.s, st.lambda, st.nu, st.z_lo, st.z_hi, b, st.mu);
      if (max_norm(rm.norms) > opts.kappa * st.mu) break;
      st.mu = std::max(mu_min, opts.sigma * st.mu);
    }

    Direction dir;
    try {
      dir = newton_step(nlp, bd, st, b, st.mu, kkt, opts);
    } catch (const Error& e) {
      res.status = SolveStatus::STEP_FAILURE;
      res.message = e.what();
      break;
    }

    double infeas = b.h.lpNorm<1>();
    if (mi) infeas += (b.g + st.s).lpNorm<1>();
    merit.mu = st.mu;
    const MeritContext no_penalty{st.mu, 0.0, bd.obj_scale};
    const double barrier_slope = merit_slope(bd, no_penalty, st, dir, b.grad_f, infeas);
    if (infeas > 0.0) {
      const double trial = (barrier_slope + 0.5 * std::max(0.0, dir.curvature)) / (0.9 * infeas);
      if (merit.penalty < trial) merit.penalty = trial + 1.0;
    }
    const double merit0 = merit_value(bd, merit, st.x, st.s, b.f, b.h, b.g);
    const double slope = barrier_slope - merit.penalty * infeas;

    t_eval = Clock::now();
    const StepLength step = step_length(nlp, bd, st, dir, merit, merit0, slope, opts);
    res.timings.assembly += seconds_since(t_eval);

    IterationRecord rec;
    rec.iter = iter;
    rec.mu = st.mu;
    rec.alpha_primal = step.alpha_primal;
    rec.alpha_dual = step.alpha_dual;
    rec.objective = b.f;
    rec.residuals = r0.norms;
    rec.reg = dir.reg_primal;
    rec.backtracks = step.backtracks;
    if (opts.keep_trace) res.trace.push_back(rec);
    if (opts.log) {
      *opts.log << fmt::format("{:4d} {:10.3e} {:10.3e} {:10.3e} {:10.3e} {:10.3e} {:9.2e} {:9.2e} {:17.10e} {:8.1e}\n",
                               iter, st.mu, r0.norms.primal, r0.norms.dual, r0.norms.complementarity,
                               dir.reg_primal, step.alpha_primal, step.alpha_dual, b.f, dir.reg_dual);
    }

    if (!step.accepted) {
      res.status = r0.norms.primal > std::sqrt(opts.tol) ? SolveStatus::INFEASIBLE_DETECTED
                                                         : SolveStatus::STEP_FAILURE;
      res.message = fmt::format("line search failed at iteration {} (alpha < {})", iter, opts.min_step);
      break;
    }

    const double ap = step.alpha_primal;
    const double ad = step.alpha_dual;
    st.x += ap * dir.dx;
    if (mi) st.s += ap * dir.ds;
    if (me) st.lambda += ap * dir.dlambda;
    if (mi) st.nu += ad * dir.dnu;
    st.z_lo += ad * dir.dz_lo;
    st.z_hi += ad * dir.dz_hi;

    // Keep multipliers within a bounded factor of their centered values.
    auto clamp_mult = [&](double& z, double slack) {
      const double center = st.mu / slack;
      z = std::clamp(z, center / kMultiplierSafeguard, center * kMultiplierSafeguard);
    };
    for (int i = 0; i < mi; ++i) clamp_mult(st.nu[i], st.s[i]);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(bd.lo[i])) clamp_mult(st.z_lo[i], st.x[i] - bd.lo[i]);
      if (std::isfinite(bd.hi[i])) clamp_mult(st.z_hi[i], bd.hi[i] - st.x[i]);
    }
  }

  res.iterations = iter;
  res.x = st.x;
  res.objective = b.f;
  res.obj_scale = bd.obj_scale;
  res.lambda = st.lambda / bd.obj_scale;
  res.nu = st.nu / bd.obj_scale;
  res.z_lo = st.z_lo / bd.obj_scale;
  res.z_hi = st.z_hi / bd.obj_scale;
  res.slack = st.s;
  res.g = b.g;
  res.lower = bd.lo;
  res.upper = bd.hi;
  res.timings.factorization = kkt.factor_seconds;
  res.timings.total = seconds_since(t_start);
  if (res.message.empty()) res.message = std::string(to_string(res.status));
  return res;
}

KktResiduals kkt_certificate(const Nlp& nlp, const SolveResult& r) {
  EvalBundle b;
  const Eigen::VectorXd lam = r.lambda * r.obj_scale;
  const Eigen::VectorXd nu = r.nu * r.obj_scale;
  nlp.eval(r.x, r.obj_scale, lam, nu, b, false);
  ScaledBounds bd{r.lower, r.upper, r.obj_scale};
  return compute_residuals(bd, r.x, r.slack, lam, nu, r.z_lo * r.obj_scale, r.z_hi * r.obj_scale, b, 0.0).norms;
}

std::vector<int> binding_constraints(const SolveResult& r, double activity_tol, double multiplier_tol) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < r.g.size(); ++i) {
    const bool active = r.g[i] >= -activity_tol;
    const bool priced = r.nu.size() > i && r.nu[i] >= multiplier_tol && r.slack.size() > i &&
                        r.slack[i] < activity_tol;
    if (active || priced) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string trace_to_json(const std::vector<IterationRecord>& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : trace) {
    arr.push_back({{"iter", t.iter},
                   {"mu", t.mu},
                   {"alpha_primal", t.alpha_primal},
                   {"alpha_dual", t.alpha_dual},
                   {"objective", t.objective},
                   {"inf_primal", t.residuals.primal},
                   {"inf_dual", t.residuals.dual},
                   {"complementarity", t.residuals.complementarity},
                   {"reg", t.reg},
                   {"backtracks", t.backtracks}});
  }
  return arr.dump(1);
}

}  // namespace apfopf
