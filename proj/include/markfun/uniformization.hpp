#pragma once

#include <cmath>
#include <vector>

#include "markfun/errors.hpp"
#include "markfun/generator.hpp"

namespace markfun {

/// Row-stochastic restriction P = I + Q/q with q above the largest exit rate.
struct UniformizedChain {
  double q = 1.0;
  SparseCsr p; // includes diagonal entries
  Index dim() const { return p.rows(); }
};

/// q = safety * max_i |Q_ii|; the zero generator gets q = 1 and P = I.
inline UniformizedChain uniformize(const Generator& gen, double safety = 1.02) {
  if (!(safety > 1.0)) throw ValidationError("uniformization safety must be > 1");
  const double maxdiag = gen.max_abs_diagonal();
  UniformizedChain chain;
  chain.q = maxdiag == 0.0 ? 1.0 : safety * maxdiag;

  std::vector<Triplet> ts;
  ts.reserve(static_cast<std::size_t>(gen.nnz()));
  gen.offdiag().for_each_entry([&](Index r, Index c, double v) {
    ts.push_back({r, c, v / chain.q});
  });
  for (Index i = 0; i < gen.size(); ++i)
    ts.push_back({i, i, 1.0 + gen.diagonal()[i] / chain.q});
  chain.p = SparseCsr::from_triplets(gen.size(), gen.size(), std::move(ts));

  chain.p.for_each_entry([&](Index, Index, double v) {
    if (v < -1e-15 || v > 1.0 + 1e-15)
      throw ValidationError("uniformized matrix entry outside [0,1]");
  });
  Vector rs = chain.p.row_sums();
  for (Index i = 0; i < rs.size(); ++i)
    if (std::abs(rs[i] - 1.0) > 1e-12)
      throw ValidationError("uniformized matrix row sums deviate from 1");
  return chain;
}

namespace detail {

/// Normalized Poisson(qt) weights for k in [left, left + weights.size());
/// both tails beyond the window hold mass well below tail_tol. Weights are
/// generated by up/down recurrence from the mode so large qt cannot
/// underflow, and anything below 1e-300 is treated as zero.
struct PoissonWindow {
  long left = 0;
  std::vector<double> weights;
  long right() const { return left + static_cast<long>(weights.size()) - 1; }
};

inline PoissonWindow poisson_window(double qt, double tail_tol,
                                    long max_terms = 10000000) {
  PoissonWindow win;
  if (qt <= 0.0) {
    win.weights = {1.0};
    return win;
  }
  const long mode = static_cast<long>(std::floor(qt));
  if (mode >= max_terms)
    throw ResourceError(
        "uniformization: Poisson series exceeds the term budget; "
        "consider splitting the horizon");
  const double rel_cut = std::max(tail_tol * 1e-8, 1e-300);

  std::vector<double> down; // k = mode, mode-1, ..., left
  double w = 1.0;
  down.push_back(w);
  for (long k = mode; k > 0; --k) {
    w *= static_cast<double>(k) / qt;
    if (w < rel_cut) break;
    down.push_back(w);
  }
  win.left = mode - static_cast<long>(down.size()) + 1;

  std::vector<double> up; // k = mode+1, ...
  w = 1.0;
  for (long k = mode + 1;; ++k) {
    w *= qt / static_cast<double>(k);
    if (w < rel_cut) break;
    up.push_back(w);
    if (k >= max_terms)
      throw ResourceError(
          "uniformization: Poisson series exceeds the term budget; "
          "consider splitting the horizon");
  }

  win.weights.assign(down.rbegin(), down.rend());
  win.weights.insert(win.weights.end(), up.begin(), up.end());
  double total = 0.0;
  for (double x : win.weights) total += x;
  for (double& x : win.weights) {
    x /= total;
    if (x < 1e-300) x = 0.0;
  }
  return win;
}

} // namespace detail

/// pi(t)^T = sum_k e^{-qt} (qt)^k / k! * pi0^T P^k, truncated so the
/// discarded Poisson mass stays below tol.
inline Vector transient(const UniformizedChain& chain, const Vector& pi0,
                        double t, double tol = 1e-8) {
  if (pi0.size() != chain.dim()) throw IndexError("transient: pi0 dimension");
  if (!(t >= 0.0)) throw ValidationError("transient: t must be >= 0");
  if (!(tol > 0.0)) throw ValidationError("transient: tol must be positive");
  const auto win = detail::poisson_window(chain.q * t, 0.5 * tol);

  Vector x = pi0; // pi0^T P^k, propagated through the transpose
  Vector acc = Vector::Zero(chain.dim());
  for (long k = 0; k <= win.right(); ++k) {
    if (k >= win.left) {
      const double wk = win.weights[static_cast<std::size_t>(k - win.left)];
      if (wk != 0.0) acc += wk * x;
    }
    if (k < win.right()) x = chain.p.transpose_matvec(x);
  }
  return acc;
}

/// L(t)^T = int_0^t pi(tau)^T dtau expanded in powers of P:
/// L(t)^T = sum_k (1/q) (1 - F(k)) pi0^T P^k with F the Poisson cdf.
/// The truncation index is pushed far enough that t * (Poisson tail) <= tol.
inline Vector cumulative(const UniformizedChain& chain, const Vector& pi0,
                         double t, double tol = 1e-8) {
  if (pi0.size() != chain.dim()) throw IndexError("cumulative: pi0 dimension");
  if (!(t >= 0.0)) throw ValidationError("cumulative: t must be >= 0");
  if (!(tol > 0.0)) throw ValidationError("cumulative: tol must be positive");
  if (t == 0.0) return Vector::Zero(chain.dim());
  const double tail_tol = 0.5 * tol / std::max(t, 1.0);
  const auto win = detail::poisson_window(chain.q * t, tail_tol);

  Vector x = pi0;
  Vector acc = Vector::Zero(chain.dim());
  double cdf = 0.0;
  for (long k = 0; k <= win.right(); ++k) {
    if (k >= win.left)
      cdf += win.weights[static_cast<std::size_t>(k - win.left)];
    const double coeff = (1.0 - cdf) / chain.q;
    if (coeff > 0.0) acc += coeff * x;
    if (k < win.right()) x = chain.p.transpose_matvec(x);
  }
  return acc;
}

} // namespace markfun
