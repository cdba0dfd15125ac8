#include "apfopf/netmodel.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <fmt/core.h>

#include "apfopf/error.hpp"

namespace apfopf {

std::string_view to_string(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Validation: return "validation";
    case ErrorCategory::Assembly: return "assembly";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Solve: return "solve";
    case ErrorCategory::Audit: return "audit";
  }
  return "unknown";
}

std::string_view to_string(BusKind kind) noexcept {
  switch (kind) {
    case BusKind::PQ: return "PQ";
    case BusKind::PV: return "PV";
    case BusKind::REF: return "REF";
    case BusKind::ISOLATED: return "ISOLATED";
  }
  return "PQ";
}

int NetworkCase::ref_bus() const noexcept {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::REF) return static_cast<int>(i);
  }
  return -1;
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

using Matrix = std::vector<std::vector<double>>;

[[noreturn]] void parse_error(const std::string& msg) { throw Error(ErrorCategory::Parse, msg); }
[[noreturn]] void validation_error(const std::string& msg) {
  throw Error(ErrorCategory::Validation, msg);
}

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  bool in_string = false;
  for (char c : text) {
    if (in_comment) {
      if (c == '\n') {
        in_comment = false;
        out.push_back(c);
      }
      continue;
    }
    if (c == '\'') in_string = !in_string;
    if (c == '\n') in_string = false;
    if (c == '%' && !in_string) {
      in_comment = true;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

double parse_number(std::string_view token, std::string_view context) {
  std::string tok(token);
  if (tok == "Inf" || tok == "inf" || tok == "+Inf") return kInf;
  if (tok == "-Inf" || tok == "-inf") return -kInf;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || errno == ERANGE) {
    parse_error(fmt::format("invalid number '{}' in {}", tok, context));
  }
  return v;
}

Matrix parse_matrix_body(std::string_view body, std::string_view name) {
  Matrix rows;
  std::vector<double> row;
  std::string token;
  auto flush_token = [&] {
    if (!token.empty()) {
      row.push_back(parse_number(token, name));
      token.clear();
    }
  };
  auto flush_row = [&] {
    flush_token();
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == ';' || c == '\n') {
      flush_row();
    } else if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      flush_token();
    } else if (c == '.' && i + 2 < body.size() && body.substr(i, 3) == "...") {
      // line continuation
      flush_token();
      while (i < body.size() && body[i] != '\n') ++i;
    } else {
      token.push_back(c);
    }
  }
  flush_row();
  if (!rows.empty()) {
    const std::size_t cols = rows.front().size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) {
        parse_error(fmt::format("malformed matrix row {} in mpc.{}: expected {} columns, found {}",
                                r + 1, name, cols, rows[r].size()));
      }
    }
  }
  return rows;
}

struct RawCase {
  std::string name;
  std::optional<double> base_mva;
  std::map<std::string, Matrix, std::less<>> matrices;
};

std::size_t find_closing(std::string_view text, std::size_t open, char open_c, char close_c) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == open_c) ++depth;
    if (text[i] == close_c && --depth == 0) return i;
  }
  parse_error(fmt::format("unterminated '{}'", open_c));
}

RawCase tokenize_case(std::string_view raw_text) {
  const std::string text = strip_comments(raw_text);
  RawCase out;

  // function mpc = name
  if (auto pos = text.find("function"); pos != std::string::npos) {
    auto eq = text.find('=', pos);
    if (eq != std::string::npos) {
      std::size_t b = eq + 1;
      while (b < text.size() && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
      std::size_t e = b;
      while (e < text.size() && is_ident(text[e])) ++e;
      if (e > b) out.name = text.substr(b, e - b);
    }
  }

  std::size_t pos = 0;
  while ((pos = text.find("mpc.", pos)) != std::string::npos) {
    if (pos > 0 && is_ident(text[pos - 1])) {
      pos += 4;
      continue;
    }
    std::size_t b = pos + 4;
    std::size_t e = b;
    while (e < text.size() && is_ident(text[e])) ++e;
    const std::string field = text.substr(b, e - b);
    std::size_t k = e;
    while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    if (k >= text.size() || text[k] != '=') {
      pos = e;
      continue;
    }
    ++k;
    while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    if (k >= text.size()) break;
    if (text[k] == '[') {
      const std::size_t close = find_closing(text, k, '[', ']');
      out.matrices[field] = parse_matrix_body(std::string_view(text).substr(k + 1, close - k - 1), field);
      pos = close + 1;
    } else if (text[k] == '{') {
      pos = find_closing(text, k, '{', '}') + 1;
    } else if (text[k] == '\'') {
      const auto close = text.find('\'', k + 1);
      if (close == std::string::npos) parse_error("unterminated string for mpc." + field);
      pos = close + 1;
    } else {
      std::size_t end = k;
      while (end < text.size() && text[end] != ';' && text[end] != '\n') ++end;
      std::string value = text.substr(k, end - k);
      value.erase(std::remove_if(value.begin(), value.end(),
                                 [](char c) { return std::isspace(static_cast<unsigned char>(c)); }),
                  value.end());
      if (field == "baseMVA") out.base_mva = parse_number(value, "mpc.baseMVA");
      pos = end;
    }
  }
  return out;
}

const Matrix& require_matrix(const RawCase& raw, std::string_view name, std::size_t min_cols) {
  auto it = raw.matrices.find(name);
  if (it == raw.matrices.end() || it->second.empty()) {
    parse_error(fmt::format("missing required matrix mpc.{}", name));
  }
  if (it->second.front().size() < min_cols) {
    parse_error(fmt::format("malformed matrix row 1 in mpc.{}: expected at least {} columns, found {}",
                            name, min_cols, it->second.front().size()));
  }
  return it->second;
}

// Both sides zero, or a side at or beyond +/-360 degrees, means "no bound".
std::pair<double, double> angle_bounds(double min_deg, double max_deg) {
  double lo = -kInf;
  double hi = kInf;
  const bool both_zero = min_deg == 0.0 && max_deg == 0.0;
  if (!both_zero) {
    if (min_deg > -360.0) lo = min_deg * kDeg;
    if (max_deg < 360.0) hi = max_deg * kDeg;
  }
  return {lo, hi};
}

}  // namespace

NetworkCase parse_matpower_case(std::string_view text, std::string_view fallback_name) {
  const RawCase raw = tokenize_case(text);
  if (!raw.base_mva) parse_error("missing required scalar mpc.baseMVA");
  const double base = *raw.base_mva;
  if (!(base > 0.0)) parse_error("mpc.baseMVA must be positive");

  const Matrix& bus = require_matrix(raw, "bus", 13);
  const Matrix& gen = require_matrix(raw, "gen", 10);
  const Matrix& branch = require_matrix(raw, "branch", 11);
  const Matrix& gencost = require_matrix(raw, "gencost", 4);

  NetworkCase net;
  net.name = raw.name.empty() ? std::string(fallback_name) : raw.name;
  net.base_mva = base;

  std::unordered_map<int, int> index_of;
  net.buses.reserve(bus.size());
  for (const auto& row : bus) {
    BusRecord b;
    b.id = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    if (type < 1 || type > 4) parse_error(fmt::format("bus {} has invalid type {}", b.id, type));
    b.kind = static_cast<BusKind>(type);
    b.p_load = row[2] / base;
    b.q_load = row[3] / base;
    b.g_shunt = row[4] / base;
    b.b_shunt = row[5] / base;
    b.v_init = row[7];
    b.theta_init = row[8] * kDeg;
    b.base_kv = row[9];
    b.v_max = row[11];
    b.v_min = row[12];
    if (b.v_min > b.v_max) validation_error(fmt::format("bus {} has v_min > v_max", b.id));
    if (!index_of.emplace(b.id, static_cast<int>(net.buses.size())).second) {
      validation_error(fmt::format("duplicate bus id {}", b.id));
    }
    net.buses.push_back(b);
  }

  auto resolve = [&](double id, std::string_view what) {
    auto it = index_of.find(static_cast<int>(id));
    if (it == index_of.end()) {
      validation_error(fmt::format("{} references unknown bus {}", what, static_cast<int>(id)));
    }
    return it->second;
  };

  if (gencost.size() < gen.size()) {
    parse_error(fmt::format("mpc.gencost has {} rows for {} generators", gencost.size(), gen.size()));
  }

  net.gens.reserve(gen.size());
  for (std::size_t k = 0; k < gen.size(); ++k) {
    const auto& row = gen[k];
    GenRecord g;
    g.bus = resolve(row[0], fmt::format("generator {}", k + 1));
    g.p_init = row[1] / base;
    g.q_init = row[2] / base;
    g.q_max = row[3] / base;
    g.q_min = row[4] / base;
    g.v_set = row[5];
    g.in_service = row[7] > 0.0;
    g.p_max = row[8] / base;
    g.p_min = row[9] / base;
    if (g.p_min > g.p_max) validation_error(fmt::format("generator {} has p_min > p_max", k + 1));
    if (g.q_min > g.q_max) validation_error(fmt::format("generator {} has q_min > q_max", k + 1));

    const auto& c = gencost[k];
    const int model = static_cast<int>(c[0]);
    if (model == 1) {
      throw Error(ErrorCategory::Parse,
                  fmt::format("unsupported cost: generator {} uses a piecewise-linear cost (model 1)", k + 1));
    }
    if (model != 2) parse_error(fmt::format("generator {} has unknown cost model {}", k + 1, model));
    const int ncost = static_cast<int>(c[3]);
    if (ncost < 0 || ncost > 3) {
      throw Error(ErrorCategory::Parse,
                  fmt::format("unsupported cost: generator {} has a degree-{} polynomial", k + 1, ncost - 1));
    }
    if (c.size() < 4 + static_cast<std::size_t>(ncost)) {
      parse_error(fmt::format("malformed matrix row {} in mpc.gencost", k + 1));
    }
    // Coefficients are listed highest order first, in $/h over MW.
    double coef[3] = {0.0, 0.0, 0.0};  // c0, c1, c2
    for (int t = 0; t < ncost; ++t) coef[ncost - 1 - t] = c[4 + t];
    g.cost.c0 = coef[0];
    g.cost.c1 = coef[1] * base;
    g.cost.c2 = coef[2] * base * base;
    net.gens.push_back(g);
  }

  net.branches.reserve(branch.size());
  for (std::size_t k = 0; k < branch.size(); ++k) {
    const auto& row = branch[k];
    BranchRecord br;
    br.from = resolve(row[0], fmt::format("branch {}", k + 1));
    br.to = resolve(row[1], fmt::format("branch {}", k + 1));
    br.r = row[2];
    br.x = row[3];
    br.b_charge = row[4];
    br.rate_a = row[5] / base;
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    br.shift = row[9] * kDeg;
    br.in_service = row[10] > 0.0;
    if (row.size() >= 13) {
      std::tie(br.ang_min, br.ang_max) = angle_bounds(row[11], row[12]);
    }
    if (br.in_service && br.x == 0.0 && br.r == 0.0) {
      validation_error(fmt::format("branch {} has zero impedance", k + 1));
    }
    if (std::isfinite(br.ang_min) && std::isfinite(br.ang_max) && br.ang_min > br.ang_max) {
      validation_error(fmt::format("branch {} has ang_min > ang_max", k + 1));
    }
    net.branches.push_back(br);
  }
  return net;
}

NetworkCase load_matpower_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::Parse, "cannot open case file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  return parse_matpower_case(ss.str(), stem);
}

NetworkCase prepare_case(const NetworkCase& raw) {
  const int n_raw = static_cast<int>(raw.buses.size());
  std::vector<char> keep(n_raw, 1);
  for (int i = 0; i < n_raw; ++i) {
    if (raw.buses[i].kind == BusKind::ISOLATED) keep[i] = 0;
  }

  NetworkCase out;
  out.name = raw.name;
  out.base_mva = raw.base_mva;
  std::vector<int> remap(n_raw, -1);
  bool have_ref = false;
  for (int i = 0; i < n_raw; ++i) {
    if (!keep[i]) continue;
    remap[i] = static_cast<int>(out.buses.size());
    BusRecord b = raw.buses[i];
    if (b.kind == BusKind::REF) {
      // only the first REF bus anchors the angle reference
      if (have_ref) b.kind = BusKind::PV;
      have_ref = true;
    }
    out.buses.push_back(b);
  }
  if (!have_ref) validation_error("case has no REF bus");

  for (const auto& g : raw.gens) {
    if (!g.in_service || remap[g.bus] < 0) continue;
    GenRecord copy = g;
    copy.bus = remap[g.bus];
    out.gens.push_back(copy);
  }
  for (const auto& br : raw.branches) {
    if (!br.in_service || remap[br.from] < 0 || remap[br.to] < 0) continue;
    if (br.tap <= 0.0) validation_error("branch with non-positive tap ratio");
    BranchRecord copy = br;
    copy.from = remap[br.from];
    copy.to = remap[br.to];
    out.branches.push_back(copy);
  }

  const int n = static_cast<int>(out.buses.size());
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : out.branches) {
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  const int ref = out.ref_bus();
  q.push(ref);
  seen[ref] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != n) {
    for (int i = 0; i < n; ++i) {
      if (!seen[i]) {
        validation_error(fmt::format("network has islands: bus {} is not connected to the reference bus",
                                     out.buses[i].id));
      }
    }
  }
  return out;
}

NetworkCase scale_line_ratings(const NetworkCase& network, double m_percent) {
  if (!(m_percent >= 0.0 && m_percent < 100.0)) {
    throw Error(ErrorCategory::Usage,
                fmt::format("rating scale m must lie in [0, 100), got {}", m_percent));
  }
  NetworkCase out = network;
  if (m_percent == 0.0) return out;
  std::size_t rated = 0;
  for (const auto& br : out.branches) {
    if (br.in_service && br.rated()) ++rated;
  }
  const std::size_t count = (9 * rated) / 10;
  const double factor = 1.0 - m_percent / 100.0;
  std::size_t done = 0;
  for (auto& br : out.branches) {
    if (done == count) break;
    if (br.in_service && br.rated()) {
      br.rate_a *= factor;
      ++done;
    }
  }
  return out;
}

Polar Polar::from_complex(std::complex<double> z) noexcept {
  Polar p{std::abs(z), std::arg(z)};
  if (p.ang <= -std::numbers::pi) p.ang += 2.0 * std::numbers::pi;
  return p;
}

int AdmittanceModel::find(int row, int col) const noexcept {
  const auto first = entries.begin() + row_start[row];
  const auto last = entries.begin() + row_start[row + 1];
  auto it = std::lower_bound(first, last, col, [](const Entry& e, int c) { return e.col < c; });
  if (it == last || it->col != col) return -1;
  return static_cast<int>(it - entries.begin());
}

std::complex<double> AdmittanceModel::value(int row, int col) const noexcept {
  const int k = find(row, col);
  return k < 0 ? std::complex<double>{} : entries[k].y.to_complex();
}

AdmittanceModel build_admittance(const NetworkCase& network) {
  using cd = std::complex<double>;
  const int n = static_cast<int>(network.buses.size());
  std::vector<std::map<int, cd>> rows(n);
  for (int i = 0; i < n; ++i) {
    rows[i][i] += cd(network.buses[i].g_shunt, network.buses[i].b_shunt);
  }

  AdmittanceModel adm;
  adm.n = n;
  adm.branches.resize(network.branches.size());
  for (std::size_t k = 0; k < network.branches.size(); ++k) {
    const auto& br = network.branches[k];
    if (!br.in_service) continue;
    if (br.r == 0.0 && br.x == 0.0) {
      throw Error(ErrorCategory::Validation, fmt::format("branch {} has r = x = 0", k + 1));
    }
    if (br.tap <= 0.0) throw Error(ErrorCategory::Validation, fmt::format("branch {} has tap <= 0", k + 1));
    const cd ys = 1.0 / cd(br.r, br.x);
    const cd ysh(0.0, br.b_charge / 2.0);
    const cd tap = std::polar(br.tap, br.shift);
    const cd y_tt = ys + ysh;
    const cd y_ff = y_tt / (br.tap * br.tap);
    const cd y_ft = -ys / std::conj(tap);
    const cd y_tf = -ys / tap;
    adm.branches[k] = {Polar::from_complex(y_ff), Polar::from_complex(y_ft), Polar::from_complex(y_tf),
                       Polar::from_complex(y_tt)};
    rows[br.from][br.from] += y_ff;
    rows[br.from][br.to] += y_ft;
    rows[br.to][br.from] += y_tf;
    rows[br.to][br.to] += y_tt;
  }

  adm.row_start.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    adm.row_start[i] = static_cast<int>(adm.entries.size());
    for (const auto& [col, y] : rows[i]) adm.entries.push_back({col, Polar::from_complex(y)});
  }
  adm.row_start[n] = static_cast<int>(adm.entries.size());
  return adm;
}

}  // namespace apfopf
