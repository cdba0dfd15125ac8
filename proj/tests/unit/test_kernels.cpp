#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <doctest.h>

#include "apfopf/error.hpp"
#include "apfopf/kernels.hpp"

using namespace apfopf;

TEST_CASE("trig kernel values") {
  const KernelEval z = eval_trig(0.0);
  CHECK(z.c == 1.0);
  CHECK(z.s == 0.0);
  CHECK(z.dc == 0.0);
  CHECK(z.ds == 1.0);
  const KernelEval q = eval_trig(std::numbers::pi / 2);
  CHECK(std::abs(q.c) < 1e-15);
  CHECK(q.s == doctest::Approx(1.0).epsilon(1e-15));
  const KernelEval k = eval_trig(0.3);
  CHECK(k.c == std::cos(0.3));
  CHECK(k.s == std::sin(0.3));
  CHECK_THROWS_AS(eval_trig(std::nan("")), Error);
}

TEST_CASE("all-pass kernel values") {
  for (double a : {0.1, 0.5, 1.3}) {
    const KernelEval z = eval_allpass(0.0, {a});
    CHECK(z.c == 1.0);
    CHECK(z.s == 0.0);
    CHECK(z.dc == 0.0);
    CHECK(z.ds == 2.0 * a);
  }
  const KernelEval k = eval_allpass(0.2, {0.5});
  CHECK(std::abs(k.c - 0.99 / 1.01) < 1e-15);
  CHECK(std::abs(k.s - 0.2 / 1.01) < 1e-15);
  CHECK(std::abs(k.s - 0.1980198) < 1e-7);

  const KernelEval far = eval_allpass(1000.0, {0.5});
  CHECK(std::isfinite(far.c));
  CHECK(std::isfinite(far.s));
  CHECK(far.c < -0.99);
  CHECK(std::abs(far.s) < 0.01);
  CHECK(std::abs(far.c * far.c + far.s * far.s - 1.0) < 1e-15);
  CHECK(eval_allpass(0.0, {0.5}).ds == 1.0);
}

TEST_CASE("kernel parameter validation") {
  CHECK_NOTHROW(validate({0.5}));
  CHECK_THROWS_AS(validate({0.0}), Error);
  CHECK_THROWS_AS(validate({-1.0}), Error);
  CHECK_THROWS_AS(validate({std::nan("")}), Error);
}

TEST_CASE("rotated kernel values") {
  for (double ddc : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const KernelEval r = eval_rotated(RotationRef::at(ddc), 0.0, {0.5});
    CHECK(r.c == std::cos(ddc));
    CHECK(r.s == std::sin(ddc));
  }
  for (double d : {-0.4, 0.05, 1.1}) {
    const KernelEval a = eval_allpass(d, {0.7});
    const KernelEval r = eval_rotated(RotationRef::at(0.0), d, {0.7});
    CHECK(r.c == a.c);
    CHECK(r.s == a.s);
    CHECK(r.dc == a.dc);
    CHECK(r.ds == a.ds);
    CHECK(r.d2c == a.d2c);
    CHECK(r.d2s == a.d2s);
  }
  const KernelEval r = eval_rotated(RotationRef::at(0.3), 0.05, {0.5});
  CHECK(std::abs(r.c - std::cos(0.35)) < 2e-4);
  CHECK(std::abs(r.s - std::sin(0.35)) < 2e-4);
}

TEST_CASE("unit magnitude, symmetry and denominator over random samples") {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> ud(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> ua(0.0, 2.0);
  double worst = 0.0, worst_rot = 0.0;
  bool symmetric = true;
  for (int k = 0; k < 100000; ++k) {
    const double d = ud(rng);
    double a = ua(rng);
    if (a == 0.0) a = 1e-3;
    const KernelEval e = eval_allpass(d, {a});
    worst = std::max(worst, std::abs(e.c * e.c + e.s * e.s - 1.0));
    const KernelEval m = eval_allpass(-d, {a});
    symmetric = symmetric && m.c == e.c && m.s == -e.s;
    const KernelEval r = eval_rotated(RotationRef::at(ud(rng)), d, {a});
    worst_rot = std::max(worst_rot, std::abs(r.c * r.c + r.s * r.s - 1.0));
  }
  CHECK(worst <= 1e-12);
  CHECK(worst_rot <= 1e-12);
  CHECK(symmetric);
}

TEST_CASE("accuracy window near the origin for a = 0.5") {
  double worst = 0.0;
  for (int k = -20000; k <= 20000; ++k) {
    const double d = 0.2 * k / 20000.0;
    worst = std::max(worst, std::abs(eval_allpass(d, {0.5}).s - std::sin(d)));
  }
  CHECK(worst < 7e-4);
}

TEST_CASE("kernel derivatives match central differences") {
  const double h = 1e-5;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(a)); };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ud(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> ua(0.05, 2.0);
  for (int k = 0; k < 2000; ++k) {
    const double d = ud(rng);
    const KernelParam p{ua(rng)};
    const RotationRef ref = RotationRef::at(ud(rng));
    auto check = [&](auto f) {
      const KernelEval e = f(d), ep = f(d + h), em = f(d - h);
      CHECK(rel(e.dc, (ep.c - em.c) / (2 * h)) <= 1e-6);
      CHECK(rel(e.ds, (ep.s - em.s) / (2 * h)) <= 1e-6);
      CHECK(rel(e.d2c, (ep.dc - em.dc) / (2 * h)) <= 1e-6);
      CHECK(rel(e.d2s, (ep.ds - em.ds) / (2 * h)) <= 1e-6);
    };
    check([](double x) { return eval_trig(x); });
    check([&](double x) { return eval_allpass(x, p); });
    check([&](double x) { return eval_rotated(ref, x, p); });
  }
}

TEST_CASE("kernel sample CSV") {
  std::ostringstream out;
  const int rows = write_kernel_samples(out, {-0.2, 0.2, 0.1, true}, {0.5});
  CHECK(rows == 5);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "delta_deg,trig_c,trig_s,ap_c,ap_s,trig_dc,trig_ds,ap_dc,ap_ds");
  std::string last;
  while (std::getline(in, line)) last = line;
  std::vector<double> v;
  std::stringstream ss(last);
  for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
  REQUIRE(v.size() == 9);
  CHECK(v[0] == doctest::Approx(0.2 * 180.0 / std::numbers::pi));
  CHECK(std::abs(v[4] - 0.1980198) < 1e-7);
  std::ostringstream deg;
  CHECK(write_kernel_samples(deg, {}, {0.5}) == 361);
}
