#pragma once

#include <string>
#include <vector>

#include "markfun/measures.hpp"

namespace markfun {

/// Sparse derivative dQ/dp of a parametric generator family. Rows sum to
/// zero (the family preserves Q*ones = 0), but entries may have any sign.
/// Layout mirrors Generator: off-diagonal CSR plus a dense diagonal.
class DirectionMatrix {
public:
  DirectionMatrix() = default;

  /// Diagonal derived as the negated off-diagonal row sum, which keeps the
  /// zero-row-sum invariant exact. Off-diagonal derivatives may be negative.
  static DirectionMatrix from_offdiagonal(Index n,
                                          const std::vector<Triplet>& triplets) {
    std::vector<Triplet> ts;
    ts.reserve(triplets.size());
    for (const Triplet& t : triplets) {
      if (t.row == t.col)
        throw ValidationError("direction diagonal is derived, not supplied");
      ts.push_back(t);
    }
    DirectionMatrix d;
    d.offdiag_ = SparseCsr::from_triplets(n, n, std::move(ts));
    d.diag_ = Vector::Zero(n);
    for (Index r = 0; r < n; ++r) {
      double acc = 0.0;
      d.offdiag_.for_each_in_row(r, [&](Index, double v) { acc += v; });
      d.diag_[r] = -acc;
    }
    return d;
  }

  /// Full triplets including the diagonal (e.g. a Matrix Market file);
  /// row sums must vanish to 1e-10 relative.
  static DirectionMatrix from_triplets(Index n,
                                       const std::vector<Triplet>& triplets) {
    std::vector<Triplet> off;
    Vector diag = Vector::Zero(n);
    for (const Triplet& t : triplets) {
      if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n)
        throw IndexError("direction index out of range");
      if (t.row == t.col)
        diag[t.row] += t.value;
      else
        off.push_back(t);
    }
    DirectionMatrix d;
    d.offdiag_ = SparseCsr::from_triplets(n, n, std::move(off));
    d.diag_ = diag;
    const Vector rs = d.offdiag_.row_sums() + diag;
    const double scale = std::max(1.0, d.norm_inf());
    for (Index r = 0; r < n; ++r)
      if (std::abs(rs[r]) > 1e-10 * scale)
        throw ValidationError("direction rows must sum to zero");
    return d;
  }

  static DirectionMatrix zero(Index n) { return from_offdiagonal(n, {}); }

  Index dim() const { return diag_.size(); }
  Index size() const { return diag_.size(); }
  const SparseCsr& offdiag() const { return offdiag_; }
  const Vector& diagonal() const { return diag_; }

  Vector apply(const Vector& x) const {
    if (x.size() != dim()) throw IndexError("direction matvec dimension");
    Vector y = offdiag_.matvec(x);
    y.array() += diag_.array() * x.array();
    return y;
  }

  Vector apply_transpose(const Vector& x) const {
    if (x.size() != dim()) throw IndexError("direction matvec dimension");
    Vector y = offdiag_.transpose_matvec(x);
    y.array() += diag_.array() * x.array();
    return y;
  }

  double norm1() const {
    Vector cs = diag_.cwiseAbs();
    offdiag_.for_each_entry([&](Index, Index c, double v) { cs[c] += std::abs(v); });
    return dim() == 0 ? 0.0 : cs.maxCoeff();
  }

  double norm_inf() const {
    Vector rs = diag_.cwiseAbs();
    offdiag_.for_each_entry([&](Index r, Index, double v) { rs[r] += std::abs(v); });
    return dim() == 0 ? 0.0 : rs.maxCoeff();
  }

  std::vector<Triplet> to_triplets() const {
    std::vector<Triplet> ts = offdiag_.to_triplets();
    for (Index i = 0; i < dim(); ++i)
      if (diag_[i] != 0.0) ts.push_back({i, i, diag_[i]});
    return ts;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d = offdiag_.to_dense();
    d.diagonal() += diag_;
    return d;
  }

  /// Block with rows/cols relabeled consecutively (diagonal included).
  SparseCsr block(const std::vector<Index>& rows,
                  const std::vector<Index>& cols) const {
    std::vector<Index> col_map(static_cast<std::size_t>(dim()), -1);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] < 0 || cols[j] >= dim())
        throw IndexError("column index out of range");
      col_map[cols[j]] = static_cast<Index>(j);
    }
    std::vector<Triplet> ts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index r = rows[i];
      if (r < 0 || r >= dim()) throw IndexError("row index out of range");
      offdiag_.for_each_in_row(r, [&](Index c, double v) {
        if (col_map[c] >= 0) ts.push_back({static_cast<Index>(i), col_map[c], v});
      });
      if (col_map[r] >= 0 && diag_[r] != 0.0)
        ts.push_back({static_cast<Index>(i), col_map[r], diag_[r]});
    }
    return SparseCsr::from_triplets(static_cast<Index>(rows.size()),
                                    static_cast<Index>(cols.size()),
                                    std::move(ts));
  }

private:
  SparseCsr offdiag_;
  Vector diag_;
};

/// Action of the 2x2 block matrix [[Q, E], [0, Q]] on length-2n vectors.
/// The block system is never materialized; norms are the triangle bound.
template <LinearOperator QOp, LinearOperator EOp>
class BlockFrechetOperator {
public:
  BlockFrechetOperator(const QOp& q, const EOp& e) : q_(&q), e_(&e) {
    if (q.dim() != e.dim())
      throw IndexError("generator and direction dimensions differ");
  }

  Index dim() const { return 2 * q_->dim(); }

  Vector apply(const Vector& x) const {
    const Index n = q_->dim();
    if (x.size() != 2 * n) throw IndexError("block operator dimension");
    Vector y(2 * n);
    y.head(n) = q_->apply(x.head(n)) + e_->apply(x.tail(n));
    y.tail(n) = q_->apply(x.tail(n));
    return y;
  }

  Vector apply_transpose(const Vector& x) const {
    const Index n = q_->dim();
    if (x.size() != 2 * n) throw IndexError("block operator dimension");
    Vector y(2 * n);
    y.head(n) = q_->apply_transpose(x.head(n));
    y.tail(n) = e_->apply_transpose(x.head(n)) + q_->apply_transpose(x.tail(n));
    return y;
  }

  double norm1() const { return q_->norm1() + e_->norm1(); }
  double norm_inf() const { return q_->norm_inf() + e_->norm_inf(); }

private:
  const QOp* q_;
  const EOp* e_;
};

/// Measure value and its directional derivative from a single Krylov run.
struct SensitivityResult {
  double value = 0.0;
  double derivative = 0.0;
  int restarts = 0;
  bool converged = true;
  std::vector<double> update_norms;
  std::vector<std::string> warnings;
};

namespace detail {

struct BilinearParts {
  FunKind kind;
  Vector weight;
};

inline BilinearParts measure_parts(const Generator& q, const MeasureSpec& spec) {
  switch (spec.kind) {
    case MeasureKind::InstReliability:
    case MeasureKind::InstAvailability:
      return {FunKind::ExpT, spec.partition->up_indicator(q.size())};
    case MeasureKind::InstReward:
      return {FunKind::ExpT, spec.reward->entries};
    case MeasureKind::Uptime:
      return {FunKind::TPhi1T, spec.partition->up_indicator(q.size())};
    case MeasureKind::CumulativeReward:
      return {FunKind::TPhi1T, spec.reward->entries};
    case MeasureKind::ExpectedFailures:
      return {FunKind::TPhi1T,
              failure_rate_vector(q.offdiag(), q.size(), *spec.partition)};
    default:
      throw SpecError("sensitivity needs a matrix-function measure");
  }
}

} // namespace detail

/// First-order sensitivity of a matrix-function measure through the block
/// trick: the Krylov space is built on the transposed 2n block operator with
/// start [pi0; 0]; the head of the result carries f(Q^T) pi0 (the measure
/// itself) and the tail carries the Frechet term, so value and derivative
/// come out of one run at roughly twice the evaluation cost.
inline SensitivityResult measure_sensitivity(const Generator& q,
                                             const MeasureSpec& spec,
                                             const DirectionMatrix& direction,
                                             const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind == MeasureKind::SteadyStateReward)
    throw SpecError("steady-state sensitivity is not defined by this route");
  if (spec.kind == MeasureKind::MttfInfinite)
    throw SpecError("use mttf_sensitivity for the unbounded-horizon MTTF");
  if (direction.dim() != q.size())
    throw IndexError("direction dimension mismatch");

  SensitivityResult res;
  if (spec.kind == MeasureKind::MttfFinite) {
    // Reduced u-block evaluation; the direction restricts accordingly.
    const StatePartition& part = *spec.partition;
    const Index nu = static_cast<Index>(part.up.size());
    if (nu == 0) return res;
    Vector pi0u(nu);
    for (Index i = 0; i < nu; ++i) pi0u[i] = spec.pi0.entries[part.up[i]];
    if (pi0u.isZero(0.0)) return res;
    const SparseCsr qu = extract_submatrix(q, part.up, part.up);
    const SparseCsr eu = direction.block(part.up, part.up);
    const CsrOperator qop(qu), eop(eu);
    const BlockFrechetOperator block(qop, eop);
    const TransposeView blockt(block);
    Vector start = Vector::Zero(2 * nu);
    start.head(nu) = pi0u;
    const KrylovResult kr =
        funm_action(blockt, start, FunKind::TPhi1T, *spec.t, opts.krylov);
    res.value = kr.value.head(nu).sum();
    res.derivative = kr.value.tail(nu).sum();
    res.restarts = kr.restarts_used;
    res.converged = kr.converged;
    res.update_norms = kr.update_norms;
    res.warnings = kr.warnings;
    return res;
  }

  const detail::BilinearParts parts = detail::measure_parts(q, spec);
  const BlockFrechetOperator block(q, direction);
  const TransposeView blockt(block);
  const Index n = q.size();
  Vector start = Vector::Zero(2 * n);
  start.head(n) = spec.pi0.entries;
  const KrylovResult kr =
      funm_action(blockt, start, parts.kind, *spec.t, opts.krylov);
  res.value = kr.value.head(n).dot(parts.weight);
  res.derivative = kr.value.tail(n).dot(parts.weight);
  if (spec.kind == MeasureKind::ExpectedFailures) {
    // The exit-rate weight itself depends on Q; chain rule adds
    // pi0^T f(Q) (dw/dp) with dw/dp built from the direction.
    const Vector w_dot = detail::failure_rate_vector(direction.offdiag(),
                                                     q.size(), *spec.partition);
    res.derivative += kr.value.head(n).dot(w_dot);
  }
  res.restarts = kr.restarts_used;
  res.converged = kr.converged;
  res.update_norms = kr.update_norms;
  res.warnings = kr.warnings;
  return res;
}

/// Closed-form chain rule for the MTTF linear solve:
/// d(-pi0_u^T Q_u^{-1} 1) = pi0_u^T Q_u^{-1} E_u Q_u^{-1} 1,
/// two sparse solves and one bilinear form.
inline double mttf_sensitivity(const Generator& q, const MeasureSpec& spec,
                               const DirectionMatrix& direction) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::MttfInfinite)
    throw SpecError("mttf_sensitivity expects the mttf measure kind");
  if (direction.dim() != q.size())
    throw IndexError("direction dimension mismatch");
  const StatePartition& part = *spec.partition;
  const Index nu = static_cast<Index>(part.up.size());
  if (nu == 0) return 0.0;

  const SparseCsr qu = extract_submatrix(q, part.up, part.up);
  const SparseCsr eu = direction.block(part.up, part.up);
  Vector pi0u(nu);
  for (Index i = 0; i < nu; ++i) pi0u[i] = spec.pi0.entries[part.up[i]];

  const Eigen::SparseMatrix<double> a = detail::to_eigen(qu);
  const Vector x = detail::solve_sparse(a, Vector::Ones(nu));
  const Vector y = detail::solve_sparse(
      Eigen::SparseMatrix<double>(a.transpose()), pi0u);
  return y.dot(eu.matvec(x));
}

} // namespace markfun
