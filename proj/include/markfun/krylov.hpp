#pragma once

#include <concepts>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "markfun/dense_funm.hpp"
#include "markfun/errors.hpp"
#include "markfun/generator.hpp"

namespace markfun {

/// Anything the Krylov engine can iterate with: a square action, its
/// transpose, and cheap norm bounds for breakdown thresholds.
template <typename Op>
concept LinearOperator = requires(const Op& op, const Vector& x) {
  { op.dim() } -> std::convertible_to<Index>;
  { op.apply(x) } -> std::convertible_to<Vector>;
  { op.apply_transpose(x) } -> std::convertible_to<Vector>;
  { op.norm1() } -> std::convertible_to<double>;
  { op.norm_inf() } -> std::convertible_to<double>;
};

/// Adapter presenting A^T as the forward action.
template <LinearOperator Op>
class TransposeView {
public:
  explicit TransposeView(const Op& op) : op_(&op) {}
  Index dim() const { return op_->dim(); }
  Vector apply(const Vector& x) const { return op_->apply_transpose(x); }
  Vector apply_transpose(const Vector& x) const { return op_->apply(x); }
  double norm1() const { return op_->norm_inf(); }
  double norm_inf() const { return op_->norm1(); }

private:
  const Op* op_;
};

/// Dense operator wrapper, mostly for tests and small oracles.
class DenseOperator {
public:
  explicit DenseOperator(DenseMatrix a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw IndexError("operator must be square");
  }
  Index dim() const { return a_.rows(); }
  Vector apply(const Vector& x) const { return a_ * x; }
  Vector apply_transpose(const Vector& x) const { return a_.transpose() * x; }
  double norm1() const { return a_.cwiseAbs().colwise().sum().maxCoeff(); }
  double norm_inf() const { return a_.cwiseAbs().rowwise().sum().maxCoeff(); }
  const DenseMatrix& matrix() const { return a_; }

private:
  DenseMatrix a_;
};

struct KrylovConfig {
  int restart_length = 15;
  int max_restarts = 10;
  double tol = 1e-8;
  double breakdown_tol = 1e-12;
  /// Record per-cycle orthonormality and Arnoldi-relation residuals
  /// (costs extra matvecs; meant for tests and debugging).
  bool collect_diagnostics = false;

  void validate() const {
    if (restart_length < 2) throw ValidationError("restart length must be >= 2");
    if (max_restarts < 1) throw ValidationError("max_restarts must be >= 1");
    if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");
    if (!(breakdown_tol >= 0.0)) throw ValidationError("negative breakdown tolerance");
  }
};

/// One Arnoldi factorization Q V = V H + h_next v_next e_m^T.
struct ArnoldiDecomposition {
  DenseMatrix basis;  // n x k, orthonormal columns
  DenseMatrix hess;   // k x k upper Hessenberg
  double h_next = 0.0;
  Vector v_next;      // unit vector, zero on breakdown
  bool breakdown = false;
};

struct CycleDiagnostics {
  double orth_error = 0.0;        // ||V^T V - I||_F
  double relation_residual = 0.0; // ||Q V - V H - h_next v_next e_m^T||_F
};

struct KrylovResult {
  Vector value;
  int restarts_used = 0;
  std::vector<double> update_norms;
  bool converged = false;
  bool breakdown = false;
  std::vector<CycleDiagnostics> cycles;
  std::vector<std::string> warnings;
};

/// Arnoldi with modified Gram-Schmidt and one reorthogonalization pass.
/// Requires a unit start vector. A lucky breakdown (h_{j+1,j} below
/// breakdown_tol * ||Q||_1) returns a truncated decomposition.
template <LinearOperator Op>
ArnoldiDecomposition arnoldi(const Op& op, const Vector& v, int m,
                             double breakdown_tol = 1e-12) {
  const Index n = op.dim();
  if (v.size() != n) throw IndexError("arnoldi: start vector dimension");
  const double vnorm = v.norm();
  if (vnorm == 0.0) throw ValidationError("arnoldi: zero start vector");
  if (std::abs(vnorm - 1.0) > 1e-8)
    throw ValidationError("arnoldi: start vector must have unit norm");
  if (m < 1) throw ValidationError("arnoldi: m must be >= 1");

  const double breakdown_scale = std::max(op.norm1(), 1e-300);
  ArnoldiDecomposition dec;
  dec.basis.resize(n, m);
  dec.hess = DenseMatrix::Zero(m, m);
  dec.basis.col(0) = v;
  for (int j = 0; j < m; ++j) {
    Vector w = op.apply(dec.basis.col(j));
    for (int i = 0; i <= j; ++i) {
      const double hij = dec.basis.col(i).dot(w);
      dec.hess(i, j) += hij;
      w -= hij * dec.basis.col(i);
    }
    // Second MGS pass; generators are nonnormal, so always reorthogonalize.
    for (int i = 0; i <= j; ++i) {
      const double corr = dec.basis.col(i).dot(w);
      dec.hess(i, j) += corr;
      w -= corr * dec.basis.col(i);
    }
    const double hnext = w.norm();
    if (hnext <= breakdown_tol * breakdown_scale) {
      dec.basis.conservativeResize(n, j + 1);
      dec.hess.conservativeResize(j + 1, j + 1);
      dec.h_next = 0.0;
      dec.v_next = Vector::Zero(n);
      dec.breakdown = true;
      return dec;
    }
    if (j + 1 < m) {
      dec.hess(j + 1, j) = hnext;
      dec.basis.col(j + 1) = w / hnext;
    } else {
      dec.h_next = hnext;
      dec.v_next = w / hnext;
    }
  }
  return dec;
}

namespace detail {

inline CycleDiagnostics cycle_diagnostics(const DenseMatrix& qv,
                                          const ArnoldiDecomposition& dec) {
  CycleDiagnostics d;
  const Index k = dec.basis.cols();
  d.orth_error = (dec.basis.transpose() * dec.basis -
                  DenseMatrix::Identity(k, k))
                     .norm();
  DenseMatrix resid = qv - dec.basis * dec.hess;
  if (!dec.breakdown) resid.col(k - 1) -= dec.h_next * dec.v_next;
  d.relation_residual = resid.norm();
  return d;
}

} // namespace detail

/// Restarted Arnoldi approximation of f(Q) v.
///
/// Each cycle appends its Hessenberg block to an accumulated block-Hessenberg
/// matrix whose subdiagonal carries the h_{m+1,m} of the previous cycle; the
/// cycle correction is the current basis times the trailing entries of
/// f(H_acc) e_1. Stopping is a relative update-norm test against the
/// accumulated approximation, with an absolute fallback tol*||v|| while the
/// accumulated norm is below 1. A lucky breakdown ends the iteration with the
/// truncated Hessenberg, flagged converged.
template <LinearOperator Op>
KrylovResult funm_action(const Op& op, const Vector& v, FunKind kind, double t,
                         const KrylovConfig& cfg = KrylovConfig{}) {
  cfg.validate();
  if (!(t >= 0.0)) throw ValidationError("funm_action: t must be >= 0");
  if (v.size() != op.dim()) throw IndexError("funm_action: dimension mismatch");
  const double beta = v.norm();
  if (beta == 0.0) throw ValidationError("funm_action: zero input vector");

  const int m = cfg.restart_length;
  KrylovResult res;
  res.value = Vector::Zero(op.dim());

  DenseMatrix h_acc;
  Index acc = 0; // filled size of h_acc
  Vector v_cur = v / beta;
  double h_link = 0.0;

  for (int cycle = 0; cycle < cfg.max_restarts; ++cycle) {
    ArnoldiDecomposition dec = arnoldi(op, v_cur, m, cfg.breakdown_tol);
    const Index k = dec.hess.rows();

    DenseMatrix grown = DenseMatrix::Zero(acc + k, acc + k);
    if (acc > 0) {
      grown.topLeftCorner(acc, acc) = h_acc;
      grown(acc, acc - 1) = h_link;
    }
    grown.block(acc, acc, k, k) = dec.hess;
    h_acc = std::move(grown);
    acc += k;

    const Vector y = funm_hessenberg_e1(h_acc, kind, t);
    const Vector correction = beta * (dec.basis * y.tail(k));
    res.value += correction;
    res.restarts_used = cycle + 1;
    res.update_norms.push_back(correction.norm());

    if (cfg.collect_diagnostics) {
      DenseMatrix qv(op.dim(), k);
      for (Index j = 0; j < k; ++j) qv.col(j) = op.apply(dec.basis.col(j));
      res.cycles.push_back(detail::cycle_diagnostics(qv, dec));
    }
    if (res.update_norms.size() >= 2) {
      const auto& u = res.update_norms;
      if (u[u.size() - 1] > u[u.size() - 2])
        res.warnings.push_back("update norm grew at cycle " +
                               std::to_string(cycle + 1));
    }

    if (dec.breakdown) {
      // The Krylov space is invariant; the accumulated value is exact.
      res.breakdown = true;
      res.converged = true;
      return res;
    }
    const double total = res.value.norm();
    const double threshold = cfg.tol * (total < 1.0 ? beta : total);
    if (res.update_norms.back() <= threshold) {
      res.converged = true;
      return res;
    }
    v_cur = dec.v_next;
    h_link = dec.h_next;
  }
  throw ConvergenceError(
      "funm_action: no convergence within " +
          std::to_string(cfg.max_restarts) + " restarts (last update norm " +
          std::to_string(res.update_norms.back()) + ")",
      res.update_norms);
}

/// w^T f(Q) v through one Krylov run and a scalar product.
template <LinearOperator Op>
double bilinear_form(const Vector& w, const Op& op, const Vector& v,
                     FunKind kind, double t,
                     const KrylovConfig& cfg = KrylovConfig{}) {
  if (w.size() != op.dim()) throw IndexError("bilinear_form: dimension mismatch");
  if (w.isZero(0.0)) return 0.0;
  return w.dot(funm_action(op, v, kind, t, cfg).value);
}

} // namespace markfun
