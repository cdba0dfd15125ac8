#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace apfopf {

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;

  friend bool operator==(const Inertia&, const Inertia&) = default;
};

/// Sparse LDL^T for symmetric indefinite saddle-point matrices.
///
/// Rows hinted as constraints (negative sign hint) are paired with their
/// strongest primal neighbour and eliminated together as a static 2x2 pivot,
/// so zero diagonal blocks never produce a zero 1x1 pivot. Pairs and the
/// remaining 1x1 nodes are ordered with AMD on the compressed graph, then
/// factored with an up-looking block algorithm over the elimination tree.
/// Pivots that are numerically singular are replaced by a small signed value
/// and reported in `Inertia::zero`.
class SparseLdlt {
 public:
  struct Options {
    double pivot_tol = 1e-14;    ///< relative to the largest |a_ij|
    double dynamic_reg = 1e-10;  ///< relative to the largest |a_ij|
    bool pair_pivots = true;
    /// Minimum |coupling| of a 2x2 pair relative to the constraint row's
    /// largest entry, after equilibration.
    double pair_threshold = 0.1;
  };

  SparseLdlt() = default;
  explicit SparseLdlt(Options options) : options_(options) {}

  /// Symbolic phase. `lower` holds the lower triangle (diagonal included);
  /// its values drive the equilibration and the 2x2 pairing. `sign_hint` has
  /// one entry per row: +1 primal, -1 constraint.
  void analyze(const Eigen::SparseMatrix<double>& lower, std::span<const int> sign_hint);

  /// Numeric phase. Re-runs `analyze` when the pattern differs from the
  /// analyzed one and redoes the symbolic step when the value-based pairing
  /// changes. Returns false only for non-finite input.
  bool factorize(const Eigen::SparseMatrix<double>& lower);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  Inertia inertia() const noexcept { return inertia_; }
  int size() const noexcept { return n_; }
  int num_pairs() const noexcept { return num_pairs_; }
  std::size_t factor_nonzeros() const noexcept { return l_rows_.size(); }

 private:
  void equilibrate(const double* values);
  std::vector<int> choose_pairs() const;
  void symbolic(const std::vector<int>& partner);

  struct Block {
    double v[4] = {0.0, 0.0, 0.0, 0.0};  // row-major, leading dimension 2
  };

  Options options_;
  int n_ = 0;
  int nb_ = 0;
  int num_pairs_ = 0;
  std::vector<int> sign_hint_;
  std::vector<double> scale_;  // symmetric equilibration
  std::vector<double> scaled_;
  std::vector<double> row_max_;
  std::vector<int> partner_;

  // Pattern fingerprint of the analyzed matrix.
  std::vector<int> outer_;
  std::vector<int> inner_;

  // Blocks in elimination order: scalar members (original indices).
  std::vector<int> bsize_;
  std::vector<int> member0_;
  std::vector<int> member1_;
  std::vector<int> block_of_;  // original index -> block position
  std::vector<int> local_of_;  // original index -> 0/1 inside its block

  // Block upper-triangular pattern of the permuted matrix (CSC by block column).
  std::vector<int> cp_;
  std::vector<int> ci_;
  // For each stored value of `lower`: target block slot and local offset(s).
  std::vector<int> value_slot_;
  std::vector<int> value_off_;
  std::vector<int> value_off_sym_;  // second position for diagonal blocks, else -1

  std::vector<int> etree_;
  std::vector<int> lp_;
  std::vector<int> l_rows_;
  std::vector<Block> l_blocks_;
  std::vector<Block> d_;
  std::vector<Block> dinv_;

  Inertia inertia_;
};

}  // namespace apfopf
