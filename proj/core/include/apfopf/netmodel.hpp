#pragma once

#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace apfopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class BusKind { PQ = 1, PV = 2, REF = 3, ISOLATED = 4 };

std::string_view to_string(BusKind kind) noexcept;

/// One bus, in per unit and radians. Loads and shunts are already divided by
/// the system base.
struct BusRecord {
  int id = 0;  ///< external bus number from the case file
  BusKind kind = BusKind::PQ;
  double p_load = 0.0;
  double q_load = 0.0;
  double g_shunt = 0.0;
  double b_shunt = 0.0;
  double v_min = 0.9;
  double v_max = 1.1;
  double v_init = 1.0;
  double theta_init = 0.0;
  double base_kv = 0.0;
};

/// Polynomial generation cost f(p) = c2 p^2 + c1 p + c0 with p in per unit.
struct PolyCost {
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  double value(double p) const noexcept { return (c2 * p + c1) * p + c0; }
  double slope(double p) const noexcept { return 2.0 * c2 * p + c1; }
};

struct GenRecord {
  int bus = 0;  ///< internal bus index
  double p_init = 0.0;
  double q_init = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double v_set = 1.0;
  bool in_service = true;
  PolyCost cost;
};

/// Branch data in per unit and radians. `rate_a == 0` means unlimited, a
/// missing angle-difference bound is stored as +/-infinity.
struct BranchRecord {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charge = 0.0;
  double rate_a = 0.0;
  double tap = 1.0;  ///< 0 in the file is normalized to 1
  double shift = 0.0;
  double ang_min = -kInf;
  double ang_max = kInf;
  bool in_service = true;

  bool rated() const noexcept { return rate_a > 0.0; }
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<BusRecord> buses;
  std::vector<GenRecord> gens;
  std::vector<BranchRecord> branches;

  std::size_t num_buses() const noexcept { return buses.size(); }
  /// Index of the first REF bus, or -1.
  int ref_bus() const noexcept;
};

/// Parses MATPOWER `mpc` case text (bus, gen, branch, gencost, baseMVA).
/// Off-status rows are kept and flagged. Throws Error(Parse) on grammar
/// problems and Error(Validation) on dangling references or duplicate ids.
NetworkCase parse_matpower_case(std::string_view text, std::string_view fallback_name = "case");

NetworkCase load_matpower_file(const std::string& path);

/// Drops isolated buses and out-of-service equipment, renumbers buses densely
/// and checks that every remaining bus is reachable from the REF bus.
NetworkCase prepare_case(const NetworkCase& raw);

/// Reduces rate_a by m percent on the first floor(0.9 * N) in-service rated
/// branches, N being the number of such branches, in ascending branch order.
NetworkCase scale_line_ratings(const NetworkCase& network, double m_percent);

/// Canonical JSON dump: per-unit values, radians, null for infinite bounds.
std::string case_to_json(const NetworkCase& network);
NetworkCase case_from_json(std::string_view json_text);

/// Magnitude / angle pair, angle in (-pi, pi].
struct Polar {
  double mag = 0.0;
  double ang = 0.0;

  static Polar from_complex(std::complex<double> z) noexcept;
  std::complex<double> to_complex() const noexcept { return std::polar(mag, ang); }
};

struct BranchAdmittance {
  Polar y_ff;
  Polar y_ft;
  Polar y_tf;
  Polar y_tt;
};

/// Bus admittance matrix in compressed-row form plus the per-branch pi-model
/// blocks it was assembled from.
struct AdmittanceModel {
  struct Entry {
    int col = 0;
    Polar y;
  };

  int n = 0;
  std::vector<int> row_start;  ///< size n + 1
  std::vector<Entry> entries;  ///< columns sorted within each row
  std::vector<BranchAdmittance> branches;  ///< parallel to case.branches; zero for off branches

  /// Position of (row, col) in `entries`, or -1 when structurally zero.
  int find(int row, int col) const noexcept;
  std::complex<double> value(int row, int col) const noexcept;
};

AdmittanceModel build_admittance(const NetworkCase& network);

}  // namespace apfopf
