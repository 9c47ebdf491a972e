#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "markfun/krylov.hpp"
#include "markfun/uniformization.hpp"

namespace markfun {

enum class MeasureKind {
  InstReliability,
  InstAvailability,
  MttfInfinite,
  MttfFinite,
  ExpectedFailures,
  Uptime,
  InstReward,
  CumulativeReward,
  SteadyStateReward,
};

inline const char* measure_kind_name(MeasureKind k) {
  switch (k) {
    case MeasureKind::InstReliability: return "inst_reliability";
    case MeasureKind::InstAvailability: return "inst_availability";
    case MeasureKind::MttfInfinite: return "mttf";
    case MeasureKind::MttfFinite: return "mttf_finite";
    case MeasureKind::ExpectedFailures: return "expected_failures";
    case MeasureKind::Uptime: return "uptime";
    case MeasureKind::InstReward: return "inst_reward";
    case MeasureKind::CumulativeReward: return "cumulative_reward";
    case MeasureKind::SteadyStateReward: return "steady_state_reward";
  }
  throw SpecError("unknown measure kind");
}

inline MeasureKind measure_kind_from_name(const std::string& name) {
  for (MeasureKind k :
       {MeasureKind::InstReliability, MeasureKind::InstAvailability,
        MeasureKind::MttfInfinite, MeasureKind::MttfFinite,
        MeasureKind::ExpectedFailures, MeasureKind::Uptime,
        MeasureKind::InstReward, MeasureKind::CumulativeReward,
        MeasureKind::SteadyStateReward})
    if (name == measure_kind_name(k)) return k;
  throw SpecError("unknown measure kind: " + name);
}

/// Declarative description of one measure.
struct MeasureSpec {
  MeasureKind kind = MeasureKind::InstReward;
  std::optional<StatePartition> partition;
  std::optional<RewardVector> reward;
  ProbVector pi0;
  std::optional<double> t;
};

inline bool needs_partition(MeasureKind k) {
  switch (k) {
    case MeasureKind::InstReliability:
    case MeasureKind::InstAvailability:
    case MeasureKind::MttfInfinite:
    case MeasureKind::MttfFinite:
    case MeasureKind::ExpectedFailures:
    case MeasureKind::Uptime:
      return true;
    default:
      return false;
  }
}

inline bool needs_horizon(MeasureKind k) {
  return k != MeasureKind::MttfInfinite && k != MeasureKind::SteadyStateReward;
}

inline bool needs_reward(MeasureKind k) {
  switch (k) {
    case MeasureKind::InstReward:
    case MeasureKind::CumulativeReward:
    case MeasureKind::SteadyStateReward:
      return true;
    default:
      return false;
  }
}

/// True for the kinds evaluated as pi0^T f(Q) w with f in {e^{tz}, t phi1(tz)}.
inline bool is_matrix_function_measure(MeasureKind k) {
  return k != MeasureKind::MttfInfinite && k != MeasureKind::SteadyStateReward;
}

inline void validate_measure_spec(const MeasureSpec& spec, Index n) {
  if (spec.pi0.size() != n) throw SpecError("pi0 dimension mismatch");
  if (needs_partition(spec.kind) && !spec.partition)
    throw SpecError(std::string(measure_kind_name(spec.kind)) +
                    " requires a state partition");
  if (spec.partition) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (Index s : spec.partition->up) {
      if (s < 0 || s >= n || seen[s]) throw SpecError("invalid up set");
      seen[s] = 1;
    }
    for (Index s : spec.partition->down) {
      if (s < 0 || s >= n || seen[s]) throw SpecError("invalid down set");
      seen[s] = 1;
    }
    for (char c : seen)
      if (!c) throw SpecError("partition does not cover the state space");
  }
  if (needs_horizon(spec.kind)) {
    if (!spec.t) throw SpecError(std::string(measure_kind_name(spec.kind)) +
                                 " requires a horizon t");
    if (!(*spec.t >= 0.0)) throw SpecError("horizon t must be >= 0");
  }
  if (needs_reward(spec.kind) && !spec.reward)
    throw SpecError(std::string(measure_kind_name(spec.kind)) +
                    " requires a reward vector");
  if (spec.reward && spec.reward->size() != n)
    throw SpecError("reward dimension mismatch");
  if (spec.kind == MeasureKind::MttfInfinite && !spec.partition->absorbing_down)
    throw SpecError("mttf requires an absorbing down set");
}

enum class Method { Krylov, Uniformization };

struct EvalOptions {
  Method method = Method::Krylov;
  KrylovConfig krylov;
  double uniformization_tol = 1e-8;
  double uniformization_safety = 1.02;
};

struct MeasureResult {
  double value = 0.0;
  std::string solver; // "krylov", "uniformization" or "direct"
  int restarts = 0;
  bool converged = true;
  std::vector<double> update_norms;
  std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::SparseMatrix<double> to_eigen(const SparseCsr& a) {
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(static_cast<std::size_t>(a.nnz()));
  a.for_each_entry([&](Index r, Index c, double v) {
    ts.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  });
  Eigen::SparseMatrix<double> m(a.rows(), a.cols());
  m.setFromTriplets(ts.begin(), ts.end());
  return m;
}

/// Solve A x = b with SparseLU for moderate sizes, BiCGSTAB with diagonal
/// preconditioning above. Residual-checked.
inline Vector solve_sparse(const Eigen::SparseMatrix<double>& a, const Vector& b,
                           double residual_tol = 1e-10) {
  constexpr Index kDirectLimit = 100000;
  Vector x;
  if (a.rows() <= kDirectLimit) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
      throw SolveError("sparse LU factorization failed (matrix singular?)");
    x = lu.solve(b);
  } else {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>,
                    Eigen::DiagonalPreconditioner<double>>
        it;
    it.setTolerance(residual_tol);
    it.setMaxIterations(20000);
    it.compute(a);
    x = it.solve(b);
    if (it.info() != Eigen::Success)
      throw SolveError("iterative solve did not converge");
  }
  const double scale =
      std::max({b.norm(), x.norm(), 1e-300});
  if (!x.allFinite() || (a * x - b).norm() > 1e-8 * scale)
    throw SolveError("sparse solve residual too large (matrix singular?)");
  return x;
}

/// Exit-rate vector for the expected-failures measure:
/// w_i = sum over down-columns of Q_ij for up rows, 0 for down rows.
inline Vector failure_rate_vector(const SparseCsr& offdiag, Index n,
                                  const StatePartition& part) {
  std::vector<char> in_down(static_cast<std::size_t>(n), 0);
  for (Index s : part.down) in_down[s] = 1;
  Vector w = Vector::Zero(n);
  offdiag.for_each_entry([&](Index r, Index c, double v) {
    if (!in_down[r] && in_down[c]) w[r] += v;
  });
  return w;
}

inline void note_krylov(MeasureResult& res, const KrylovResult& kr) {
  res.solver = "krylov";
  res.restarts = kr.restarts_used;
  res.converged = kr.converged;
  res.update_norms = kr.update_norms;
  for (const auto& w : kr.warnings) res.warnings.push_back(w);
}

/// pi0^T f(Q) w by the configured method. The Krylov space is built on Q^T
/// with start vector pi0, so one run serves every reward vector.
inline MeasureResult bilinear_measure(const Generator& q, const Vector& pi0,
                                      const Vector& w, FunKind kind, double t,
                                      const EvalOptions& opts) {
  MeasureResult res;
  if (opts.method == Method::Uniformization) {
    const UniformizedChain chain = uniformize(q, opts.uniformization_safety);
    const Vector z = kind == FunKind::ExpT
                         ? transient(chain, pi0, t, opts.uniformization_tol)
                         : cumulative(chain, pi0, t, opts.uniformization_tol);
    res.value = z.dot(w);
    res.solver = "uniformization";
    return res;
  }
  const TransposeView<Generator> qt(q);
  const KrylovResult kr = funm_action(qt, pi0, kind, t, opts.krylov);
  res.value = kr.value.dot(w);
  note_krylov(res, kr);
  return res;
}

inline void check_probability_range(MeasureResult& res) {
  if (res.value < -1e-8 || res.value > 1.0 + 1e-8)
    throw SolveError("probability measure escaped [0,1] by more than 1e-8; "
                     "solver failure suspected");
  if (res.value < 0.0 || res.value > 1.0) {
    res.warnings.push_back("value clamped into [0,1]");
    res.value = std::min(1.0, std::max(0.0, res.value));
  }
}

inline void check_nonnegative_range(MeasureResult& res) {
  if (res.value < -1e-10)
    throw SolveError("nonnegative measure came out negative; "
                     "solver failure suspected");
  if (res.value < 0.0) res.value = 0.0;
}

} // namespace detail

/// Operator over a square sparse block (used for reduced u-block measures).
class CsrOperator {
public:
  explicit CsrOperator(const SparseCsr& a) : a_(&a) {
    if (a.rows() != a.cols()) throw IndexError("operator must be square");
  }
  Index dim() const { return a_->rows(); }
  Vector apply(const Vector& x) const { return a_->matvec(x); }
  Vector apply_transpose(const Vector& x) const {
    return a_->transpose_matvec(x);
  }
  double norm1() const { return a_->norm1(); }
  double norm_inf() const { return a_->norm_inf(); }

private:
  const SparseCsr* a_;
};

/// MTTF = -pi0_u^T Q_u^{-1} ones, through one transposed sparse solve.
inline MeasureResult mttf_infinite(const Generator& q, const MeasureSpec& spec,
                                   const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::MttfInfinite)
    throw SpecError("mttf_infinite called with wrong measure kind");
  (void)opts;
  const StatePartition& part = *spec.partition;
  MeasureResult res;
  res.solver = "direct";
  if (part.up.empty()) return res; // started failed, zero time in up

  const SparseCsr qu = extract_submatrix(q, part.up, part.up);
  const InvertibilityReport report = check_up_block_invertible(qu);
  if (!report.verified)
    res.warnings.push_back("up-block invertibility " + report.reason);

  Vector pi0u(static_cast<Index>(part.up.size()));
  for (std::size_t i = 0; i < part.up.size(); ++i)
    pi0u[static_cast<Index>(i)] = spec.pi0.entries[part.up[i]];
  if (pi0u.isZero(0.0)) return res;

  const Vector y = detail::solve_sparse(
      Eigen::SparseMatrix<double>(detail::to_eigen(qu).transpose()), -pi0u);
  res.value = y.sum();
  if (!(res.value > 0.0))
    throw SolveError("MTTF must be positive; up block looks singular");
  return res;
}

/// MTTF(t) = pi0_u^T [t phi1(t Q_u)] ones, evaluated on the reduced block.
inline MeasureResult mttf_finite(const Generator& q, const MeasureSpec& spec,
                                 const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::MttfFinite)
    throw SpecError("mttf_finite called with wrong measure kind");
  const StatePartition& part = *spec.partition;
  MeasureResult res;
  res.solver =
      opts.method == Method::Uniformization ? "uniformization" : "krylov";
  if (!part.absorbing_down)
    res.warnings.push_back(
        "down set is not absorbing; value is the expected time in up "
        "before the first exit");

  const Index nu = static_cast<Index>(part.up.size());
  if (nu == 0) return res;
  Vector pi0u(nu);
  for (Index i = 0; i < nu; ++i) pi0u[i] = spec.pi0.entries[part.up[i]];
  if (pi0u.isZero(0.0)) return res;
  const SparseCsr qu = extract_submatrix(q, part.up, part.up);

  if (opts.method == Method::Uniformization) {
    // Killed process as a proper generator: one sink state absorbs the
    // leak rates, so the standard series applies unchanged.
    std::vector<Triplet> ts;
    qu.for_each_entry([&](Index r, Index c, double v) {
      if (r != c) ts.push_back({r, c, v});
    });
    const Vector leak =
        detail::failure_rate_vector(q.offdiag(), q.size(), part);
    for (Index i = 0; i < nu; ++i)
      if (leak[part.up[i]] > 0.0) ts.push_back({i, nu, leak[part.up[i]]});
    const Generator killed = build_generator(nu + 1, ts);
    Vector pi0_pad = Vector::Zero(nu + 1);
    pi0_pad.head(nu) = pi0u;
    const Vector l = cumulative(uniformize(killed, opts.uniformization_safety),
                                pi0_pad, *spec.t, opts.uniformization_tol);
    res.value = l.head(nu).sum();
    detail::check_nonnegative_range(res);
    return res;
  }

  const CsrOperator op(qu);
  const TransposeView<CsrOperator> opt_t(op);
  const KrylovResult kr =
      funm_action(opt_t, pi0u, FunKind::TPhi1T, *spec.t, opts.krylov);
  res.value = kr.value.sum();
  detail::note_krylov(res, kr);
  detail::check_nonnegative_range(res);
  return res;
}

/// R(t) = pi0^T e^{tQ} 1_u for a chain with absorbing down states.
inline MeasureResult inst_reliability(const Generator& q,
                                      const MeasureSpec& spec,
                                      const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::InstReliability)
    throw SpecError("inst_reliability called with wrong measure kind");
  if (!spec.partition->absorbing_down)
    throw SpecError("inst_reliability requires an absorbing down set");
  MeasureResult res = detail::bilinear_measure(
      q, spec.pi0.entries, spec.partition->up_indicator(q.size()),
      FunKind::ExpT, *spec.t, opts);
  detail::check_probability_range(res);
  return res;
}

/// F(t) = 1 - R(t), the complementary failure probability.
inline MeasureResult inst_unreliability(const Generator& q,
                                        const MeasureSpec& spec,
                                        const EvalOptions& opts = {}) {
  MeasureResult res = inst_reliability(q, spec, opts);
  res.value = 1.0 - res.value;
  return res;
}

/// A(t) = pi0^T e^{tQ} 1_u. Same formula as reliability; reducibility only
/// draws a warning.
inline MeasureResult inst_availability(const Generator& q,
                                       const MeasureSpec& spec,
                                       const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::InstAvailability)
    throw SpecError("inst_availability called with wrong measure kind");
  MeasureResult res = detail::bilinear_measure(
      q, spec.pi0.entries, spec.partition->up_indicator(q.size()),
      FunKind::ExpT, *spec.t, opts);
  if (!is_irreducible(q))
    res.warnings.push_back(
        "chain is reducible; availability coincides with reliability here");
  detail::check_probability_range(res);
  return res;
}

/// Expected number of up-to-down transitions in [0,t]:
/// pi0^T [t phi1(tQ)] w with w the rate of leaving up toward down.
inline MeasureResult expected_failures(const Generator& q,
                                       const MeasureSpec& spec,
                                       const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::ExpectedFailures)
    throw SpecError("expected_failures called with wrong measure kind");
  const Vector w =
      detail::failure_rate_vector(q.offdiag(), q.size(), *spec.partition);
  MeasureResult res = detail::bilinear_measure(q, spec.pi0.entries, w,
                                               FunKind::TPhi1T, *spec.t, opts);
  detail::check_nonnegative_range(res);
  return res;
}

/// U(t) = pi0^T [t phi1(tQ)] 1_u, the expected time spent up in [0,t].
/// For an irreducible chain the integrand tends to a positive limit, so
/// U(t) grows without bound as t grows; there is no t = infinity variant.
inline MeasureResult uptime(const Generator& q, const MeasureSpec& spec,
                            const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::Uptime)
    throw SpecError("uptime called with wrong measure kind");
  MeasureResult res = detail::bilinear_measure(
      q, spec.pi0.entries, spec.partition->up_indicator(q.size()),
      FunKind::TPhi1T, *spec.t, opts);
  detail::check_nonnegative_range(res);
  return res;
}

/// M_inst(t) = pi0^T e^{tQ} r.
inline MeasureResult inst_reward(const Generator& q, const MeasureSpec& spec,
                                 const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::InstReward)
    throw SpecError("inst_reward called with wrong measure kind");
  return detail::bilinear_measure(q, spec.pi0.entries, spec.reward->entries,
                                  FunKind::ExpT, *spec.t, opts);
}

/// M(t) = pi0^T [t phi1(tQ)] r.
inline MeasureResult cumulative_reward(const Generator& q,
                                       const MeasureSpec& spec,
                                       const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::CumulativeReward)
    throw SpecError("cumulative_reward called with wrong measure kind");
  return detail::bilinear_measure(q, spec.pi0.entries, spec.reward->entries,
                                  FunKind::TPhi1T, *spec.t, opts);
}

/// Steady-state distribution of an irreducible chain, then pi^T r. Computed
/// by a null-space solve; a Krylov approximation of the discontinuous
/// limiting function would be ill-posed, so no iterative matrix-function
/// route is offered.
inline MeasureResult steady_state_reward(const Generator& q,
                                         const MeasureSpec& spec,
                                         const EvalOptions& opts = {}) {
  validate_measure_spec(spec, q.size());
  if (spec.kind != MeasureKind::SteadyStateReward)
    throw SpecError("steady_state_reward called with wrong measure kind");
  (void)opts;
  if (!is_irreducible(q))
    throw SpecError(
        "steady state requires an irreducible chain (it may not exist or "
        "be unique otherwise)");
  const Index n = q.size();
  // Q^T pi = 0 with the first equation replaced by sum(pi) = 1.
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(static_cast<std::size_t>(q.nnz()) + static_cast<std::size_t>(n));
  q.offdiag().for_each_entry([&](Index r, Index c, double v) {
    if (c != 0) ts.emplace_back(static_cast<int>(c), static_cast<int>(r), v);
  });
  for (Index i = 0; i < n; ++i) {
    if (i != 0 && q.diagonal()[i] != 0.0)
      ts.emplace_back(static_cast<int>(i), static_cast<int>(i),
                      q.diagonal()[i]);
    ts.emplace_back(0, static_cast<int>(i), 1.0);
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(ts.begin(), ts.end());
  Vector b = Vector::Zero(n);
  b[0] = 1.0;
  Vector pi = detail::solve_sparse(a, b);
  const double resid = q.apply_transpose(pi).norm();
  if (resid > 1e-8 * std::max(1.0, q.norm1()))
    throw SolveError("steady-state residual too large");
  MeasureResult res;
  res.solver = "direct";
  res.value = pi.dot(spec.reward->entries);
  return res;
}

/// Dispatch on spec.kind.
inline MeasureResult evaluate_measure(const Generator& q,
                                      const MeasureSpec& spec,
                                      const EvalOptions& opts = {}) {
  switch (spec.kind) {
    case MeasureKind::InstReliability: return inst_reliability(q, spec, opts);
    case MeasureKind::InstAvailability: return inst_availability(q, spec, opts);
    case MeasureKind::MttfInfinite: return mttf_infinite(q, spec, opts);
    case MeasureKind::MttfFinite: return mttf_finite(q, spec, opts);
    case MeasureKind::ExpectedFailures: return expected_failures(q, spec, opts);
    case MeasureKind::Uptime: return uptime(q, spec, opts);
    case MeasureKind::InstReward: return inst_reward(q, spec, opts);
    case MeasureKind::CumulativeReward: return cumulative_reward(q, spec, opts);
    case MeasureKind::SteadyStateReward:
      return steady_state_reward(q, spec, opts);
  }
  throw SpecError("unknown measure kind");
}

// ---------------------------------------------------------------------------
// JSON serialization.
//
// {
//   "kind": "cumulative_reward",        required
//   "t": 1.0,                           required unless mttf / steady state
//   "up_states": [0, 1, 2],             partition measures
//   "reward": [0.0, 1.5, ...]           explicit array
//          or {"indicator": [4, 7]}     indicator over listed states
//          or "linear",                 r_i = i
//   "pi0": [0.5, 0.5, 0.0]              explicit array
//       or {"point": 0}                 point mass
// }
//
// Missing pieces fall back to the supplied defaults (a model bundle).
// ---------------------------------------------------------------------------

struct MeasureDefaults {
  std::optional<StatePartition> partition;
  std::optional<RewardVector> reward;
  std::optional<ProbVector> pi0;
};

inline MeasureSpec measure_spec_from_json(const nlohmann::json& j,
                                          const Generator& q,
                                          const MeasureDefaults& defaults = {}) {
  if (!j.is_object()) throw SpecError("measure spec must be a JSON object");
  if (!j.contains("kind")) throw SpecError("measure spec is missing 'kind'");
  MeasureSpec spec;
  spec.kind = measure_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("t")) spec.t = j.at("t").get<double>();

  if (j.contains("up_states")) {
    spec.partition =
        make_partition(q, j.at("up_states").get<std::vector<Index>>());
  } else {
    spec.partition = defaults.partition;
  }

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    if (r.is_array()) {
      auto vals = r.get<std::vector<double>>();
      spec.reward = RewardVector::validated(
          Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size())));
    } else if (r.is_object() && r.contains("indicator")) {
      spec.reward = RewardVector::indicator(
          q.size(), r.at("indicator").get<std::vector<Index>>());
    } else if (r.is_string() && r.get<std::string>() == "linear") {
      spec.reward = RewardVector::linear(q.size());
    } else {
      throw SpecError("reward must be an array, {\"indicator\": [...]} or "
                      "\"linear\"");
    }
  } else {
    spec.reward = defaults.reward;
  }

  if (j.contains("pi0")) {
    const auto& p = j.at("pi0");
    if (p.is_array()) {
      auto vals = p.get<std::vector<double>>();
      spec.pi0 = ProbVector::validated(
          Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size())));
    } else if (p.is_object() && p.contains("point")) {
      spec.pi0 = ProbVector::point(q.size(), p.at("point").get<Index>());
    } else {
      throw SpecError("pi0 must be an array or {\"point\": index}");
    }
  } else if (defaults.pi0) {
    spec.pi0 = *defaults.pi0;
  } else {
    throw SpecError("measure spec is missing 'pi0'");
  }
  return spec;
}

inline nlohmann::json measure_spec_to_json(const MeasureSpec& spec) {
  nlohmann::json j;
  j["kind"] = measure_kind_name(spec.kind);
  if (spec.t) j["t"] = *spec.t;
  if (spec.partition) {
    j["up_states"] = spec.partition->up;
  }
  if (spec.reward) {
    j["reward"] = std::vector<double>(
        spec.reward->entries.data(),
        spec.reward->entries.data() + spec.reward->entries.size());
  }
  j["pi0"] = std::vector<double>(
      spec.pi0.entries.data(), spec.pi0.entries.data() + spec.pi0.entries.size());
  return j;
}

} // namespace markfun
