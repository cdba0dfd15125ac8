#include "apfopf/kernels.hpp"

#include <numbers>
#include <ostream>

#include <fmt/core.h>

#include "apfopf/error.hpp"

namespace apfopf {

namespace {

void require_finite(double delta) {
  if (!std::isfinite(delta)) {
    throw Error(ErrorCategory::Numeric, fmt::format("kernel argument is not finite ({})", delta));
  }
}

}  // namespace

void validate(KernelParam p) {
  if (!(std::isfinite(p.a) && p.a > 0.0)) {
    throw Error(ErrorCategory::Usage, fmt::format("all-pass parameter a must be positive, got {}", p.a));
  }
}

KernelEval eval_trig(double delta) {
  require_finite(delta);
  const double c = std::cos(delta);
  const double s = std::sin(delta);
  return {c, s, -s, c, -c, -s};
}

KernelEval eval_allpass(double delta, KernelParam p) {
  require_finite(delta);
  const double a = p.a;
  const double u = a * delta;
  const double u2 = u * u;
  const double den = 1.0 + u2;
  // Past |u| ~ 1e154 u2 overflows; the limit values are exact there.
  if (!std::isfinite(den)) return {-1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  const double inv = 1.0 / den;
  const double inv2 = inv * inv;
  const double inv3 = inv2 * inv;
  const double a2 = a * a;

  KernelEval k;
  k.c = (1.0 - u2) * inv;
  k.s = 2.0 * u * inv;
  k.dc = -4.0 * a * u * inv2;
  k.ds = 2.0 * a * (1.0 - u2) * inv2;
  // d/dd of -4 a^2 d / (1+u^2)^2 and 2a (1-u^2)/(1+u^2)^2
  k.d2c = 4.0 * a2 * (3.0 * u2 - 1.0) * inv3;
  k.d2s = 4.0 * a2 * u * (u2 - 3.0) * inv3;
  return k;
}

KernelEval eval_rotated(const RotationRef& ref, double delta_live, KernelParam p) {
  const KernelEval r = eval_allpass(delta_live, p);
  const double cr = ref.cos_dc;
  const double sr = ref.sin_dc;
  return {cr * r.c - sr * r.s,   sr * r.c + cr * r.s,   cr * r.dc - sr * r.ds,
          sr * r.dc + cr * r.ds, cr * r.d2c - sr * r.d2s, sr * r.d2c + cr * r.d2s};
}

int write_kernel_samples(std::ostream& out, const KernelSampleGrid& grid, KernelParam p) {
  validate(p);
  if (!(grid.step > 0.0) || !(grid.stop >= grid.start)) {
    throw Error(ErrorCategory::Usage, "kernel sample grid needs step > 0 and stop >= start");
  }
  constexpr double kDeg = std::numbers::pi / 180.0;
  out << "delta_deg,trig_c,trig_s,ap_c,ap_s,trig_dc,trig_ds,ap_dc,ap_ds\n";
  const auto count = static_cast<long>(std::floor((grid.stop - grid.start) / grid.step + 1e-9)) + 1;
  for (long k = 0; k < count; ++k) {
    const double v = grid.start + static_cast<double>(k) * grid.step;
    const double rad = grid.radians ? v : v * kDeg;
    const double deg = grid.radians ? v / kDeg : v;
    const KernelEval t = eval_trig(rad);
    const KernelEval ap = eval_allpass(rad, p);
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", deg, t.c,
                       t.s, ap.c, ap.s, t.dc, t.ds, ap.dc, ap.ds);
  }
  return static_cast<int>(count);
}

}  // namespace apfopf
