#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "markfun/sparse.hpp"

namespace markfun {

/// Infinitesimal generator of a finite CTMC.
///
/// Off-diagonal rates live in a CSR block; the diagonal is kept separately
/// and is always derived as the negated off-diagonal row sum, accumulated in
/// the same order used by matvec. Row sums therefore cancel exactly: for any
/// valid Generator, matvec(ones) is the zero vector bit-for-bit.
class Generator {
public:
  Generator() = default;

  Index size() const { return diag_.size(); }
  const SparseCsr& offdiag() const { return offdiag_; }
  const Vector& diagonal() const { return diag_; }
  double row_sums_tol() const { return row_sums_tol_; }

  /// y = Q x in O(nnz).
  Vector apply(const Vector& x) const {
    if (x.size() != size()) throw IndexError("matvec dimension mismatch");
    Vector y = offdiag_.matvec(x);
    y.array() += diag_.array() * x.array();
    return y;
  }

  /// y = Q^T x; same complexity, uses the lazy column mirror.
  Vector apply_transpose(const Vector& x) const {
    if (x.size() != size()) throw IndexError("matvec dimension mismatch");
    Vector y = offdiag_.transpose_matvec(x);
    y.array() += diag_.array() * x.array();
    return y;
  }

  Index dim() const { return size(); }

  /// Max absolute column sum (exact).
  double norm1() const {
    Vector cs = diag_.cwiseAbs();
    offdiag_.for_each_entry([&](Index, Index c, double v) { cs[c] += std::abs(v); });
    return size() == 0 ? 0.0 : cs.maxCoeff();
  }

  /// Max absolute row sum; equals 2*max|Q_ii| for a valid generator.
  double norm_inf() const {
    return size() == 0 ? 0.0 : 2.0 * diag_.cwiseAbs().maxCoeff();
  }

  double max_abs_diagonal() const {
    return size() == 0 ? 0.0 : diag_.cwiseAbs().maxCoeff();
  }

  Index nnz() const { return offdiag_.nnz() + size(); }

  /// All entries including the derived diagonal.
  std::vector<Triplet> to_triplets() const {
    std::vector<Triplet> ts = offdiag_.to_triplets();
    for (Index i = 0; i < size(); ++i)
      if (diag_[i] != 0.0) ts.push_back({i, i, diag_[i]});
    return ts;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d = offdiag_.to_dense();
    d.diagonal() += diag_;
    return d;
  }

  friend Generator build_generator(Index n, const std::vector<Triplet>& triplets,
                                   double row_sums_tol);

private:
  SparseCsr offdiag_;
  Vector diag_;
  double row_sums_tol_ = 1e-10;
};

/// Builds a generator from off-diagonal rate triplets. Duplicate (row,col)
/// pairs are summed; the diagonal is derived so that every row sums to zero
/// exactly. Supplying a diagonal entry is rejected.
inline Generator build_generator(Index n, const std::vector<Triplet>& triplets,
                                 double row_sums_tol = 1e-10) {
  if (n < 1) throw IndexError("generator must have at least one state");
  std::vector<Triplet> ts;
  ts.reserve(triplets.size());
  for (const Triplet& t : triplets) {
    if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n)
      throw IndexError("state index out of range");
    if (t.row == t.col)
      throw ValidationError("diagonal entries are derived, not supplied");
    if (!(t.value >= 0.0))
      throw ValidationError("off-diagonal rate must be nonnegative");
    ts.push_back(t);
  }
  Generator g;
  g.offdiag_ = SparseCsr::from_triplets(n, n, std::move(ts));
  g.diag_ = Vector::Zero(n);
  for (Index r = 0; r < n; ++r) {
    double acc = 0.0;
    g.offdiag_.for_each_in_row(r, [&](Index, double v) { acc += v; });
    g.diag_[r] = -acc;
  }
  g.row_sums_tol_ = row_sums_tol;
  return g;
}

/// Probability vector over states. `validated` enforces nonnegativity and
/// unit total mass (to 1e-12); `point` builds a point mass.
struct ProbVector {
  Vector entries;

  static ProbVector point(Index n, Index state) {
    if (state < 0 || state >= n) throw IndexError("point mass out of range");
    Vector v = Vector::Zero(n);
    v[state] = 1.0;
    return {v};
  }

  static ProbVector validated(Vector v) {
    for (Index i = 0; i < v.size(); ++i)
      if (!(v[i] >= 0.0))
        throw ValidationError("probability entries must be nonnegative");
    if (std::abs(v.sum() - 1.0) > 1e-12)
      throw ValidationError("probability entries must sum to 1");
    return {std::move(v)};
  }

  Index size() const { return entries.size(); }
};

struct RewardVector {
  Vector entries;

  static RewardVector validated(Vector v) {
    for (Index i = 0; i < v.size(); ++i)
      if (!std::isfinite(v[i]))
        throw ValidationError("reward entries must be finite");
    return {std::move(v)};
  }

  static RewardVector indicator(Index n, const std::vector<Index>& states) {
    Vector v = Vector::Zero(n);
    for (Index s : states) {
      if (s < 0 || s >= n) throw IndexError("reward state out of range");
      v[s] = 1.0;
    }
    return {v};
  }

  /// r_i = i, the queue-length reward.
  static RewardVector linear(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    return {v};
  }

  Index size() const { return entries.size(); }
};

/// Up/down split of the state space. `absorbing_down` records whether the
/// down set has no rate back into up (Q_du = 0).
struct StatePartition {
  std::vector<Index> up;
  std::vector<Index> down;
  bool absorbing_down = false;

  Vector up_indicator(Index n) const {
    Vector v = Vector::Zero(n);
    for (Index s : up) v[s] = 1.0;
    return v;
  }
};

/// Partition from an explicit up set; membership of down is the complement
/// and the absorbing flag is detected from Q.
inline StatePartition make_partition(const Generator& q,
                                     std::vector<Index> up_states) {
  const Index n = q.size();
  std::vector<char> in_up(static_cast<std::size_t>(n), 0);
  for (Index s : up_states) {
    if (s < 0 || s >= n) throw IndexError("partition state out of range");
    if (in_up[s]) throw ValidationError("duplicate state in up set");
    in_up[s] = 1;
  }
  StatePartition p;
  std::sort(up_states.begin(), up_states.end());
  p.up = std::move(up_states);
  for (Index s = 0; s < n; ++s)
    if (!in_up[s]) p.down.push_back(s);
  p.absorbing_down = true;
  for (Index s : p.down) {
    q.offdiag().for_each_in_row(s, [&](Index c, double v) {
      if (v != 0.0 && in_up[c]) p.absorbing_down = false;
    });
    if (!p.absorbing_down) break;
  }
  return p;
}

/// Partition whose down set is exactly the absorbing states (zero exit rate).
inline StatePartition absorbing_partition(const Generator& q) {
  std::vector<Index> up;
  for (Index s = 0; s < q.size(); ++s)
    if (q.diagonal()[s] != 0.0) up.push_back(s);
  return make_partition(q, std::move(up));
}

/// Extracts the block Q[rows, cols] with indices relabeled consecutively.
/// The result is a plain sparse block: generator invariants need not hold.
inline SparseCsr extract_submatrix(const Generator& q,
                                   const std::vector<Index>& rows,
                                   const std::vector<Index>& cols) {
  const Index n = q.size();
  std::vector<Index> col_map(static_cast<std::size_t>(n), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= n) throw IndexError("column index out of range");
    col_map[cols[j]] = static_cast<Index>(j);
  }
  std::vector<Triplet> ts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= n) throw IndexError("row index out of range");
    q.offdiag().for_each_in_row(r, [&](Index c, double v) {
      if (col_map[c] >= 0) ts.push_back({static_cast<Index>(i), col_map[c], v});
    });
    if (col_map[r] >= 0 && q.diagonal()[r] != 0.0)
      ts.push_back({static_cast<Index>(i), col_map[r], q.diagonal()[r]});
  }
  return SparseCsr::from_triplets(static_cast<Index>(rows.size()),
                                  static_cast<Index>(cols.size()), std::move(ts));
}

/// Result of the up-block invertibility check. `verified == false` means
/// "not verified", never "singular".
struct InvertibilityReport {
  bool verified = false;
  std::string reason;
};

/// Sufficient-condition check for invertibility of an extracted up block:
/// either every row is strictly diagonally dominant, or every state can reach
/// a row with strictly negative sum (a leak toward the down set).
inline InvertibilityReport check_up_block_invertible(const SparseCsr& block) {
  if (block.rows() != block.cols())
    throw IndexError("up block must be square");
  const Index n = block.rows();
  if (n == 0) return {true, "empty block"};

  Vector diag = Vector::Zero(n);
  Vector offsum = Vector::Zero(n);
  block.for_each_entry([&](Index r, Index c, double v) {
    if (r == c)
      diag[r] += v;
    else
      offsum[r] += std::abs(v);
  });

  bool dominant = true;
  for (Index r = 0; r < n; ++r)
    if (!(std::abs(diag[r]) > offsum[r])) {
      dominant = false;
      break;
    }
  if (dominant) return {true, "strictly diagonally dominant"};

  // Backward reachability from leaky rows over the block's directed graph.
  const double scale = std::max(1.0, block.norm_inf());
  Vector rs = block.row_sums();
  std::vector<char> reached(static_cast<std::size_t>(n), 0);
  std::vector<Index> queue;
  for (Index r = 0; r < n; ++r)
    if (rs[r] < -1e-14 * scale) {
      reached[r] = 1;
      queue.push_back(r);
    }
  const SparseCsr& bt = block.transposed();
  while (!queue.empty()) {
    Index r = queue.back();
    queue.pop_back();
    bt.for_each_in_row(r, [&](Index c, double v) {
      if (v != 0.0 && c != r && !reached[c]) {
        reached[c] = 1;
        queue.push_back(c);
      }
    });
  }
  for (Index r = 0; r < n; ++r)
    if (!reached[r])
      return {false, "not verified: state " + std::to_string(r) +
                         " has no path to an exit row"};
  return {true, "every state reaches an exit row"};
}

namespace detail {

inline std::vector<char> reachable_from(const SparseCsr& adj, Index start) {
  std::vector<char> seen(static_cast<std::size_t>(adj.rows()), 0);
  std::vector<Index> queue{start};
  seen[start] = 1;
  while (!queue.empty()) {
    Index r = queue.back();
    queue.pop_back();
    adj.for_each_in_row(r, [&](Index c, double v) {
      if (v != 0.0 && !seen[c]) {
        seen[c] = 1;
        queue.push_back(c);
      }
    });
  }
  return seen;
}

} // namespace detail

/// Strong connectivity of the rate graph: node 0 reaches every node and every
/// node reaches node 0.
inline bool is_irreducible(const Generator& q) {
  if (q.size() == 0) return false;
  if (q.size() == 1) return true;
  auto fwd = detail::reachable_from(q.offdiag(), 0);
  for (char c : fwd)
    if (!c) return false;
  auto bwd = detail::reachable_from(q.offdiag().transposed(), 0);
  for (char c : bwd)
    if (!c) return false;
  return true;
}

} // namespace markfun
