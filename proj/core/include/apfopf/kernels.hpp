#pragma once

#include <cmath>
#include <iosfwd>

namespace apfopf {

/// First-order all-pass design parameter. Values above zero only; 0.5 makes
/// the surrogate sine match the slope of sin at the origin.
struct KernelParam {
  double a = 0.5;
};

/// Cosine/sine surrogate values with first and second derivatives taken with
/// respect to the live angle argument.
struct KernelEval {
  double c = 1.0;
  double s = 0.0;
  double dc = 0.0;
  double ds = 0.0;
  double d2c = 0.0;
  double d2s = 0.0;
};

/// Pre-rotation reference for one coupled pair.
struct RotationRef {
  double delta_dc = 0.0;
  double cos_dc = 1.0;
  double sin_dc = 0.0;

  static RotationRef at(double delta_dc) noexcept {
    return {delta_dc, std::cos(delta_dc), std::sin(delta_dc)};
  }
};

/// Exact cos/sin. Throws Error(Numeric) on a non-finite angle.
KernelEval eval_trig(double delta);

/// r_cos = (1 - (a d)^2) / (1 + (a d)^2), r_sin = 2 a d / (1 + (a d)^2).
KernelEval eval_allpass(double delta, KernelParam p);

/// Rotates the all-pass pair evaluated at the deviation `delta_live` by the
/// reference angle: c = cos_dc r_cos - sin_dc r_sin, s = sin_dc r_cos + cos_dc r_sin.
KernelEval eval_rotated(const RotationRef& ref, double delta_live, KernelParam p);

/// Throws Error(Usage) unless a is finite and positive.
void validate(KernelParam p);

struct KernelSampleGrid {
  double start = -180.0;
  double stop = 180.0;
  double step = 1.0;
  bool radians = false;  ///< grid values given in radians instead of degrees
};

/// CSV with columns delta_deg, trig_c, trig_s, ap_c, ap_s, trig_dc, trig_ds,
/// ap_dc, ap_ds. Returns the number of data rows written.
int write_kernel_samples(std::ostream& out, const KernelSampleGrid& grid, KernelParam p);

}  // namespace apfopf
