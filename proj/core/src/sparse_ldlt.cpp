#include "apfopf/sparse_ldlt.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/OrderingMethods>

#include "apfopf/error.hpp"

namespace apfopf {

namespace {

// y(R x K) -= a(R x I) * b(I x K), all row-major with leading dimension 2.
inline void sub_mul(double* y, const double* a, const double* b, int rows, int inner, int cols) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int t = 0; t < inner; ++t) acc += a[2 * r + t] * b[2 * t + c];
      y[2 * r + c] -= acc;
    }
  }
}

}  // namespace

void SparseLdlt::analyze(const Eigen::SparseMatrix<double>& lower_in, std::span<const int> sign_hint) {
  Eigen::SparseMatrix<double> lower = lower_in;
  lower.makeCompressed();
  if (lower.rows() != lower.cols()) throw Error(ErrorCategory::Numeric, "LDL^T needs a square matrix");
  n_ = static_cast<int>(lower.rows());
  if (static_cast<int>(sign_hint.size()) != n_) throw Error(ErrorCategory::Numeric, "sign hint size mismatch");
  sign_hint_.assign(sign_hint.begin(), sign_hint.end());
  outer_.assign(lower.outerIndexPtr(), lower.outerIndexPtr() + n_ + 1);
  inner_.assign(lower.innerIndexPtr(), lower.innerIndexPtr() + lower.nonZeros());
  equilibrate(lower.valuePtr());
  symbolic(choose_pairs());
}

void SparseLdlt::equilibrate(const double* raw) {
  const std::size_t nnz = inner_.size();
  scale_.assign(n_, 1.0);
  scaled_.resize(nnz);
  row_max_.assign(n_, 0.0);
  auto row_maxima = [&](bool store) {
    std::fill(row_max_.begin(), row_max_.end(), 0.0);
    for (int c = 0; c < n_; ++c) {
      for (int p = outer_[c]; p < outer_[c + 1]; ++p) {
        const double v = raw[p] * scale_[c] * scale_[inner_[p]];
        if (store) scaled_[p] = v;
        row_max_[c] = std::max(row_max_[c], std::abs(v));
        row_max_[inner_[p]] = std::max(row_max_[inner_[p]], std::abs(v));
      }
    }
  };
  // Symmetric Ruiz iterations until every row maximum is close to one.
  for (int pass = 0; pass < 10; ++pass) {
    row_maxima(false);
    double worst = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (row_max_[i] > 0.0 && std::isfinite(row_max_[i])) {
        scale_[i] /= std::sqrt(row_max_[i]);
        worst = std::max(worst, std::abs(1.0 - row_max_[i]));
      }
    }
    if (worst < 1e-2) break;
  }
  row_maxima(true);
}

std::vector<int> SparseLdlt::choose_pairs() const {
  std::vector<int> partner(n_, -1);
  if (!options_.pair_pivots) return partner;

  // Candidate couplings between a constraint row and a primal row, strong
  // relative to the constraint row after equilibration.
  struct Edge {
    int cons;
    int primal;
    double w;
  };
  std::vector<Edge> edges;
  for (int c = 0; c < n_; ++c) {
    for (int p = outer_[c]; p < outer_[c + 1]; ++p) {
      const int r = inner_[p];
      if (r <= c) continue;
      const double w = std::abs(scaled_[p]);
      if (sign_hint_[r] < 0 && sign_hint_[c] > 0 && w >= options_.pair_threshold * row_max_[r] && w > 0.0) {
        edges.push_back({r, c, w});
      } else if (sign_hint_[c] < 0 && sign_hint_[r] > 0 && w >= options_.pair_threshold * row_max_[c] && w > 0.0) {
        edges.push_back({c, r, w});
      }
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.w != y.w) return x.w > y.w;
    if (x.cons != y.cons) return x.cons < y.cons;
    return x.primal < y.primal;
  });
  std::vector<std::vector<int>> nbrs(n_);
  for (const auto& e : edges) {
    nbrs[e.cons].push_back(e.primal);
    if (partner[e.cons] < 0 && partner[e.primal] < 0) {
      partner[e.cons] = e.primal;
      partner[e.primal] = e.cons;
    }
  }

  // Augmenting paths for constraint rows the greedy pass left unmatched.
  std::vector<int> seen(n_, -1);
  std::vector<int> path_via(n_, -1);
  std::vector<std::pair<int, std::size_t>> stack;
  for (int c0 = 0; c0 < n_; ++c0) {
    if (sign_hint_[c0] >= 0 || partner[c0] >= 0) continue;
    stack.assign(1, {c0, 0});
    int found = -1;
    while (!stack.empty() && found < 0) {
      auto& [c, pos] = stack.back();
      if (pos >= nbrs[c].size()) {
        stack.pop_back();
        continue;
      }
      const int v = nbrs[c][pos++];
      if (seen[v] == c0) continue;
      seen[v] = c0;
      path_via[v] = c;
      if (partner[v] < 0) {
        found = v;
      } else {
        stack.emplace_back(partner[v], 0);
      }
    }
    for (int v = found; v >= 0;) {
      const int c = path_via[v];
      const int next = partner[c];
      partner[v] = c;
      partner[c] = v;
      v = next;
    }
  }
  return partner;
}

void SparseLdlt::symbolic(const std::vector<int>& partner) {
  partner_ = partner;
  num_pairs_ = 0;
  for (int i = 0; i < n_; ++i) {
    if (partner[i] >= 0 && sign_hint_[i] < 0) ++num_pairs_;
  }

  // Groups: a primal/constraint pair or a single row.
  std::vector<int> group_of(n_, -1);
  std::vector<std::pair<int, int>> groups;
  for (int i = 0; i < n_; ++i) {
    if (group_of[i] >= 0) continue;
    const int p = partner[i];
    const int g = static_cast<int>(groups.size());
    group_of[i] = g;
    if (p >= 0) {
      group_of[p] = g;
      // primal member first
      groups.emplace_back(sign_hint_[i] > 0 ? i : p, sign_hint_[i] > 0 ? p : i);
    } else {
      groups.emplace_back(i, -1);
    }
  }
  nb_ = static_cast<int>(groups.size());

  // AMD on the compressed symmetric pattern.
  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(2 * inner_.size() + nb_);
  for (int g = 0; g < nb_; ++g) trip.emplace_back(g, g, 1.0);
  for (int c = 0; c < n_; ++c) {
    for (int p = outer_[c]; p < outer_[c + 1]; ++p) {
      const int gr = group_of[inner_[p]];
      const int gc = group_of[c];
      if (gr == gc) continue;
      trip.emplace_back(gr, gc, 1.0);
      trip.emplace_back(gc, gr, 1.0);
    }
  }
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> pattern(nb_, nb_);
  pattern.setFromTriplets(trip.begin(), trip.end());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> order;
  Eigen::AMDOrdering<int> amd;
  amd(pattern, order);

  std::vector<int> position_of_group(nb_);
  bsize_.assign(nb_, 1);
  member0_.assign(nb_, -1);
  member1_.assign(nb_, -1);
  // Unpaired constraint rows have a zero diagonal until their primal
  // neighbours are eliminated, so they go last.
  std::vector<int> sequence;
  sequence.reserve(nb_);
  for (int pass = 0; pass < 2; ++pass) {
    for (int k = 0; k < nb_; ++k) {
      const int g = order.size() == nb_ ? order.indices()[k] : k;
      const bool late = groups[g].second < 0 && sign_hint_[groups[g].first] < 0;
      if (late == (pass == 1)) sequence.push_back(g);
    }
  }
  for (int k = 0; k < nb_; ++k) {
    const int g = sequence[k];
    position_of_group[g] = k;
    member0_[k] = groups[g].first;
    member1_[k] = groups[g].second;
    bsize_[k] = groups[g].second >= 0 ? 2 : 1;
  }
  block_of_.assign(n_, -1);
  local_of_.assign(n_, 0);
  for (int k = 0; k < nb_; ++k) {
    block_of_[member0_[k]] = k;
    if (member1_[k] >= 0) {
      block_of_[member1_[k]] = k;
      local_of_[member1_[k]] = 1;
    }
  }

  // Block upper pattern (row <= col) with the diagonal always present.
  std::vector<std::vector<int>> col_rows(nb_);
  for (int k = 0; k < nb_; ++k) col_rows[k].push_back(k);
  for (int c = 0; c < n_; ++c) {
    for (int p = outer_[c]; p < outer_[c + 1]; ++p) {
      const int r = inner_[p];
      if (r < c) continue;
      const int br = block_of_[r];
      const int bc = block_of_[c];
      col_rows[std::max(br, bc)].push_back(std::min(br, bc));
    }
  }
  cp_.assign(nb_ + 1, 0);
  ci_.clear();
  for (int k = 0; k < nb_; ++k) {
    auto& rows = col_rows[k];
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    cp_[k] = static_cast<int>(ci_.size());
    ci_.insert(ci_.end(), rows.begin(), rows.end());
  }
  cp_[nb_] = static_cast<int>(ci_.size());

  auto slot_of = [&](int row_block, int col_block) {
    const auto first = ci_.begin() + cp_[col_block];
    const auto last = ci_.begin() + cp_[col_block + 1];
    return static_cast<int>(std::lower_bound(first, last, row_block) - ci_.begin());
  };
  const auto nnz = inner_.size();
  value_slot_.assign(nnz, -1);
  value_off_.assign(nnz, -1);
  value_off_sym_.assign(nnz, -1);
  for (int c = 0; c < n_; ++c) {
    for (int p = outer_[c]; p < outer_[c + 1]; ++p) {
      const int r = inner_[p];
      if (r < c) continue;
      const int br = block_of_[r];
      const int bc = block_of_[c];
      const int lr = local_of_[r];
      const int lc = local_of_[c];
      if (br == bc) {
        value_slot_[p] = slot_of(br, br);
        value_off_[p] = 2 * lr + lc;
        if (lr != lc) value_off_sym_[p] = 2 * lc + lr;
      } else if (br < bc) {
        value_slot_[p] = slot_of(br, bc);
        value_off_[p] = 2 * lr + lc;
      } else {
        value_slot_[p] = slot_of(bc, br);
        value_off_[p] = 2 * lc + lr;
      }
    }
  }

  // Elimination tree and column counts of the block factor.
  etree_.assign(nb_, -1);
  std::vector<int> work(nb_, -1);
  std::vector<int> lnz(nb_, 0);
  for (int j = 0; j < nb_; ++j) {
    work[j] = j;
    for (int p = cp_[j]; p < cp_[j + 1]; ++p) {
      int i = ci_[p];
      while (i != j && work[i] != j) {
        if (etree_[i] == -1) etree_[i] = j;
        ++lnz[i];
        work[i] = j;
        i = etree_[i];
      }
    }
  }
  lp_.assign(nb_ + 1, 0);
  for (int k = 0; k < nb_; ++k) lp_[k + 1] = lp_[k] + lnz[k];
  l_rows_.assign(lp_[nb_], 0);
  l_blocks_.assign(lp_[nb_], Block{});
  d_.assign(nb_, Block{});
  dinv_.assign(nb_, Block{});
}

bool SparseLdlt::factorize(const Eigen::SparseMatrix<double>& lower_in) {
  Eigen::SparseMatrix<double> lower_copy;
  const Eigen::SparseMatrix<double>* lower = &lower_in;
  if (!lower_in.isCompressed()) {
    lower_copy = lower_in;
    lower_copy.makeCompressed();
    lower = &lower_copy;
  }
  const bool same_pattern =
      lower->rows() == n_ && lower->nonZeros() == static_cast<Eigen::Index>(inner_.size()) &&
      std::equal(outer_.begin(), outer_.end(), lower->outerIndexPtr()) &&
      std::equal(inner_.begin(), inner_.end(), lower->innerIndexPtr());
  if (!same_pattern) analyze(*lower, sign_hint_);

  const double* raw = lower->valuePtr();
  for (std::size_t p = 0; p < inner_.size(); ++p) {
    if (!std::isfinite(raw[p])) return false;
  }
  if (same_pattern) {
    equilibrate(raw);
    std::vector<int> partner = choose_pairs();
    if (partner != partner_) symbolic(partner);
  }
  const std::vector<double>& values = scaled_;
  const std::vector<double>& row_scale = row_max_;
  auto block_scale = [&](int k) {
    double sc = row_scale[member0_[k]];
    if (member1_[k] >= 0) sc = std::max(sc, row_scale[member1_[k]]);
    return sc > 0.0 ? sc : 1.0;
  };

  std::vector<Block> cval(ci_.size());
  for (std::size_t p = 0; p < inner_.size(); ++p) {
    const int slot = value_slot_[p];
    if (slot < 0) continue;
    cval[slot].v[value_off_[p]] += values[p];
    if (value_off_sym_[p] >= 0) cval[slot].v[value_off_sym_[p]] += values[p];
  }

  inertia_ = {};
  std::vector<Block> y(nb_);
  std::vector<int> mark(nb_, -1);
  std::vector<int> stack(nb_);
  std::vector<int> path(nb_);
  std::vector<int> lnext(lp_.begin(), lp_.end() - 1);

  for (int k = 0; k < nb_; ++k) {
    const int sk = bsize_[k];
    Block dk;
    int top = nb_;
    mark[k] = k;
    for (int p = cp_[k]; p < cp_[k + 1]; ++p) {
      int i = ci_[p];
      if (i == k) {
        dk = cval[p];
        continue;
      }
      y[i] = cval[p];
      int len = 0;
      while (mark[i] != k) {
        path[len++] = i;
        mark[i] = k;
        i = etree_[i];
      }
      while (len > 0) stack[--top] = path[--len];
    }
    for (int t = top; t < nb_; ++t) {
      const int i = stack[t];
      const int si = bsize_[i];
      const Block zi = y[i];
      y[i] = Block{};
      for (int q = lp_[i]; q < lnext[i]; ++q) {
        const int r = l_rows_[q];
        sub_mul(y[r].v, l_blocks_[q].v, zi.v, bsize_[r], si, sk);
      }
      // L_ki = Z_i^T Dinv_i
      Block lki;
      const Block& di = dinv_[i];
      for (int a = 0; a < sk; ++a) {
        for (int b = 0; b < si; ++b) {
          double acc = 0.0;
          for (int c = 0; c < si; ++c) acc += zi.v[2 * c + a] * di.v[2 * c + b];
          lki.v[2 * a + b] = acc;
        }
      }
      sub_mul(dk.v, lki.v, zi.v, sk, si, sk);
      l_rows_[lnext[i]] = k;
      l_blocks_[lnext[i]] = lki;
      ++lnext[i];
    }

    const double tol = options_.pivot_tol * block_scale(k);
    const double dyn = options_.dynamic_reg * block_scale(k);
    if (sk == 1) {
      double d = dk.v[0];
      if (!std::isfinite(d)) return false;
      if (std::abs(d) <= tol) {
        d = (sign_hint_[member0_[k]] < 0 ? -1.0 : 1.0) * dyn;
        ++inertia_.zero;
      } else if (d > 0.0) {
        ++inertia_.positive;
      } else {
        ++inertia_.negative;
      }
      d_[k].v[0] = d;
      dinv_[k].v[0] = 1.0 / d;
    } else {
      double a = dk.v[0];
      const double b = 0.5 * (dk.v[1] + dk.v[2]);
      double c = dk.v[3];
      if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) return false;
      // Classify by the determinant: its sign fixes the inertia of the block
      // and cancellation in a c - b^2 signals a numerically singular pivot.
      double det = a * c - b * b;
      const double det_scale = std::abs(a * c) + b * b;
      const double amax = std::max({std::abs(a), std::abs(b), std::abs(c)});
      if (amax <= tol) {
        inertia_.zero += 2;
        a = dyn;
        c = -dyn;
      } else if (std::abs(det) <= options_.pivot_tol * det_scale || std::abs(det) <= tol * tol) {
        inertia_.zero += 1;
        const double tr = a + c;
        (tr > 0.0 ? inertia_.positive : inertia_.negative) += 1;
        a += dyn;
        c -= dyn;
      } else if (det < 0.0) {
        ++inertia_.positive;
        ++inertia_.negative;
      } else {
        (a + c > 0.0 ? inertia_.positive : inertia_.negative) += 2;
      }
      det = a * c - b * b;
      if (det == 0.0 || !std::isfinite(det)) return false;
      d_[k].v[0] = a;
      d_[k].v[1] = b;
      d_[k].v[2] = b;
      d_[k].v[3] = c;
      dinv_[k].v[0] = c / det;
      dinv_[k].v[1] = -b / det;
      dinv_[k].v[2] = -b / det;
      dinv_[k].v[3] = a / det;
    }
  }
  return true;
}

Eigen::VectorXd SparseLdlt::solve(const Eigen::VectorXd& rhs) const {
  std::vector<double> x(2 * static_cast<std::size_t>(nb_), 0.0);
  for (int k = 0; k < nb_; ++k) {
    x[2 * k] = rhs[member0_[k]] * scale_[member0_[k]];
    if (member1_[k] >= 0) x[2 * k + 1] = rhs[member1_[k]] * scale_[member1_[k]];
  }
  for (int j = 0; j < nb_; ++j) {
    const int sj = bsize_[j];
    for (int q = lp_[j]; q < lp_[j + 1]; ++q) {
      const int r = l_rows_[q];
      const double* l = l_blocks_[q].v;
      for (int a = 0; a < bsize_[r]; ++a) {
        double acc = 0.0;
        for (int b = 0; b < sj; ++b) acc += l[2 * a + b] * x[2 * j + b];
        x[2 * r + a] -= acc;
      }
    }
  }
  for (int j = 0; j < nb_; ++j) {
    const double* di = dinv_[j].v;
    if (bsize_[j] == 1) {
      x[2 * j] *= di[0];
    } else {
      const double x0 = x[2 * j];
      const double x1 = x[2 * j + 1];
      x[2 * j] = di[0] * x0 + di[1] * x1;
      x[2 * j + 1] = di[2] * x0 + di[3] * x1;
    }
  }
  for (int j = nb_ - 1; j >= 0; --j) {
    const int sj = bsize_[j];
    for (int q = lp_[j]; q < lp_[j + 1]; ++q) {
      const int r = l_rows_[q];
      const double* l = l_blocks_[q].v;
      for (int b = 0; b < sj; ++b) {
        double acc = 0.0;
        for (int a = 0; a < bsize_[r]; ++a) acc += l[2 * a + b] * x[2 * r + a];
        x[2 * j + b] -= acc;
      }
    }
  }
  Eigen::VectorXd out(n_);
  for (int k = 0; k < nb_; ++k) {
    out[member0_[k]] = x[2 * k] * scale_[member0_[k]];
    if (member1_[k] >= 0) out[member1_[k]] = x[2 * k + 1] * scale_[member1_[k]];
  }
  return out;
}

}  // namespace apfopf
