#pragma once

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "markfun/errors.hpp"
#include "markfun/sparse.hpp"

namespace markfun {

/// Function to apply to a generator, with the horizon t baked in.
enum class FunKind {
  ExpT,   // f(z) = e^{tz}
  TPhi1T, // f(z) = t*phi1(tz) = (e^{tz} - 1)/z, value t at z = 0
};

/// Degree / threshold schedule for the scaling-and-squaring Pade scheme.
/// The values are the standard ones tabulated for the double-precision
/// 13-stage method (Higham, "Functions of Matrices", ch. 10).
struct PadeConfig {
  std::vector<std::pair<int, double>> degree_table = {
      {3, 1.495585217958292e-2},
      {5, 2.539398330063230e-1},
      {7, 9.504178996162932e-1},
      {9, 2.097847961257068e+0},
      {13, 5.371920351148152e+0},
  };
  int max_squarings = 64;

  void validate() const {
    if (degree_table.empty()) throw ValidationError("empty Pade degree table");
    double prev = -1.0;
    for (const auto& [d, theta] : degree_table) {
      if (d != 3 && d != 5 && d != 7 && d != 9 && d != 13)
        throw ValidationError("Pade degree must be one of {3,5,7,9,13}");
      if (!(theta > prev))
        throw ValidationError("Pade thresholds must be strictly increasing");
      prev = theta;
    }
    if (max_squarings < 0) throw ValidationError("negative squaring bound");
  }
};

namespace detail {

inline const std::vector<double>& pade_coefficients(int degree) {
  static const std::vector<double> b3 = {120, 60, 12, 1};
  static const std::vector<double> b5 = {30240, 15120, 3360, 420, 30, 1};
  static const std::vector<double> b7 = {17297280, 8648640, 1995840, 277200,
                                         25200,    1512,    56,      1};
  static const std::vector<double> b9 = {
      17643225600, 8821612800, 2075673600, 302702400, 30270240,
      2162160,     110880,     3960,       90,        1};
  static const std::vector<double> b13 = {
      64764752532480000., 32382376266240000., 7771770303897600.,
      1187353796428800.,  129060195264000.,   10559470521600.,
      670442572800.,      33522128640.,       1323241920.,
      40840800.,          960960.,            16380.,
      182.,               1.};
  switch (degree) {
    case 3: return b3;
    case 5: return b5;
    case 7: return b7;
    case 9: return b9;
    case 13: return b13;
  }
  throw ValidationError("unsupported Pade degree");
}

// r(A) = (-U + V)^{-1} (U + V) with U odd and V even part of the numerator.
inline DenseMatrix pade_approximant(const DenseMatrix& a, int degree) {
  const auto& b = pade_coefficients(degree);
  const Index m = a.rows();
  const DenseMatrix id = DenseMatrix::Identity(m, m);
  const DenseMatrix a2 = a * a;
  DenseMatrix u, v;
  if (degree <= 9) {
    std::vector<DenseMatrix> pow = {id, a2};
    for (int k = 2; 2 * k <= degree - 1; ++k) pow.push_back(pow.back() * a2);
    DenseMatrix usum = DenseMatrix::Zero(m, m);
    DenseMatrix vsum = DenseMatrix::Zero(m, m);
    for (int k = 0; 2 * k + 1 <= degree; ++k) usum += b[2 * k + 1] * pow[k];
    for (int k = 0; 2 * k <= degree; ++k) vsum += b[2 * k] * pow[k];
    u = a * usum;
    v = vsum;
  } else {
    const DenseMatrix a4 = a2 * a2;
    const DenseMatrix a6 = a2 * a4;
    u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
             b[5] * a4 + b[3] * a2 + b[1] * id);
    v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
        b[2] * a2 + b[0] * id;
  }
  return (v - u).partialPivLu().solve(v + u);
}

} // namespace detail

/// Matrix exponential by Pade approximation with scaling and squaring.
inline DenseMatrix expm(const DenseMatrix& a,
                        const PadeConfig& cfg = PadeConfig{}) {
  cfg.validate();
  if (a.rows() != a.cols()) throw IndexError("expm requires a square matrix");
  if (!a.allFinite()) throw ValidationError("expm: non-finite input");
  if (a.rows() == 0) return a;

  const double nrm = a.cwiseAbs().colwise().sum().maxCoeff();
  for (const auto& [d, theta] : cfg.degree_table)
    if (d < 13 && nrm <= theta) return detail::pade_approximant(a, d);

  const double theta_top = cfg.degree_table.back().second;
  int h = 0;
  if (nrm > theta_top)
    h = static_cast<int>(std::ceil(std::log2(nrm / theta_top)));
  if (h > cfg.max_squarings)
    throw ValidationError("expm: matrix norm exceeds squaring budget");
  DenseMatrix f =
      detail::pade_approximant(a / std::pow(2.0, h), cfg.degree_table.back().first);
  for (int i = 0; i < h; ++i) f = f * f;
  return f;
}

/// Truncated Taylor series for e^A v. Independent of the Pade path; intended
/// as a test oracle only.
inline Vector expm_action_series(const DenseMatrix& a, const Vector& v,
                                 double tol = 1e-14) {
  if (a.rows() != a.cols() || a.cols() != v.size())
    throw IndexError("expm_action_series dimension mismatch");
  if (!a.allFinite() || !v.allFinite())
    throw ValidationError("expm_action_series: non-finite input");
  Vector sum = v;
  Vector term = v;
  constexpr long kMaxTerms = 100000;
  for (long k = 1; k <= kMaxTerms; ++k) {
    term = (a * term) / static_cast<double>(k);
    sum += term;
    if (term.norm() <= tol * std::max(sum.norm(), 1e-300)) return sum;
  }
  throw ConvergenceError("expm_action_series did not converge", {});
}

/// phi1(A) v through the augmented exponential: the top-right column of
/// exp([[A, v], [0, 0]]). The rational formula (e^z - 1)/z is never formed,
/// so singular A is fine.
inline Vector phi1_action(const DenseMatrix& a, const Vector& v,
                          const PadeConfig& cfg = PadeConfig{}) {
  if (a.rows() != a.cols() || a.cols() != v.size())
    throw IndexError("phi1_action dimension mismatch");
  if (!a.allFinite() || !v.allFinite())
    throw ValidationError("phi1_action: non-finite input");
  const Index m = a.rows();
  DenseMatrix aug = DenseMatrix::Zero(m + 1, m + 1);
  aug.topLeftCorner(m, m) = a;
  aug.topRightCorner(m, 1) = v;
  return expm(aug, cfg).topRightCorner(m, 1);
}

namespace detail {

inline void require_hessenberg(const DenseMatrix& h) {
  const double scale = h.cwiseAbs().colwise().sum().maxCoeff();
  for (Index j = 0; j + 2 < h.rows(); ++j)
    for (Index i = j + 2; i < h.rows(); ++i)
      if (std::abs(h(i, j)) > 1e-14 * scale)
        throw ValidationError("matrix is not upper Hessenberg");
}

} // namespace detail

/// f(H) for an upper Hessenberg H and f in {e^{tz}, t*phi1(tz)}. The phi1
/// case goes through one augmented exponential of size 2m, whose top-right
/// block is t*phi1(tH).
inline DenseMatrix funm_hessenberg(const DenseMatrix& h, FunKind kind, double t,
                                   const PadeConfig& cfg = PadeConfig{}) {
  if (h.rows() != h.cols()) throw IndexError("funm_hessenberg: square input");
  if (!h.allFinite()) throw ValidationError("funm_hessenberg: non-finite input");
  detail::require_hessenberg(h);
  const Index m = h.rows();
  if (kind == FunKind::ExpT) return expm(t * h, cfg);
  DenseMatrix aug = DenseMatrix::Zero(2 * m, 2 * m);
  aug.topLeftCorner(m, m) = t * h;
  aug.topRightCorner(m, m) = t * DenseMatrix::Identity(m, m);
  return expm(aug, cfg).topRightCorner(m, m);
}

/// First column of f(H); what the restarted engine consumes. For phi1 the
/// augmented matrix carries a single extra column, keeping the cost at one
/// exponential of size m+1.
inline Vector funm_hessenberg_e1(const DenseMatrix& h, FunKind kind, double t,
                                 const PadeConfig& cfg = PadeConfig{}) {
  if (h.rows() != h.cols()) throw IndexError("funm_hessenberg_e1: square input");
  if (!h.allFinite())
    throw ValidationError("funm_hessenberg_e1: non-finite input");
  detail::require_hessenberg(h);
  const Index m = h.rows();
  if (kind == FunKind::ExpT) return expm(t * h, cfg).col(0);
  DenseMatrix aug = DenseMatrix::Zero(m + 1, m + 1);
  aug.topLeftCorner(m, m) = t * h;
  aug(0, m) = t;
  return expm(aug, cfg).topRightCorner(m, 1);
}

} // namespace markfun
