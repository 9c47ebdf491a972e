#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "markfun/krylov.hpp"
#include "oracles.hpp"

using namespace markfun;

namespace {

Generator queue_generator(Index n, double rho1 = 1.0, double rho2 = 1.0) {
  std::vector<Triplet> ts;
  for (Index i = 0; i + 1 < n; ++i) ts.push_back({i, i + 1, rho2});
  for (Index i = 1; i < n; ++i) ts.push_back({i, i - 1, rho1});
  return build_generator(n, ts);
}

Vector unit(Index n, Index i) {
  Vector v = Vector::Zero(n);
  v[i] = 1.0;
  return v;
}

} // namespace

TEST_CASE("arnoldi basics") {
  SECTION("zero operator breaks down immediately") {
    Generator q = build_generator(3, {});
    auto dec = arnoldi(q, unit(3, 0), 3);
    REQUIRE(dec.breakdown);
    REQUIRE(dec.hess.rows() == 1);
    REQUIRE(dec.hess(0, 0) == 0.0);
  }
  SECTION("rejects bad start vectors") {
    Generator q = queue_generator(5);
    REQUIRE_THROWS_AS(arnoldi(q, Vector::Zero(5), 3), ValidationError);
    REQUIRE_THROWS_AS(arnoldi(q, 2.0 * unit(5, 0), 3), ValidationError);
  }
  SECTION("symmetric operator projects to a tridiagonal Hessenberg") {
    // symmetrized tridiagonal test matrix (the queue generator itself is
    // nonsymmetric even for rho1 = rho2)
    const Index n = 30;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    DenseMatrix a = DenseMatrix::Zero(n, n);
    for (Index i = 0; i + 1 < n; ++i) {
      const double r = u(rng);
      a(i, i + 1) = r;
      a(i + 1, i) = r;
      a(i, i) = -2.0 * r;
    }
    DenseOperator op(a);
    auto dec = arnoldi(op, unit(n, 0), 12);
    for (Index j = 0; j < dec.hess.cols(); ++j)
      for (Index i = j + 2; i < dec.hess.rows(); ++i)
        REQUIRE(std::abs(dec.hess(i, j)) <= 1e-10);
    // and the upper triangle mirrors the lower one
    for (Index j = 0; j + 2 < dec.hess.cols(); ++j)
      for (Index i = 0; i + 2 <= j; ++i)
        REQUIRE(std::abs(dec.hess(i, j)) <= 1e-10);
  }
  SECTION("Arnoldi relation and orthonormality on a random generator") {
    std::mt19937 rng(17);
    Generator q = oracles::random_generator(50, 0.1, rng);
    auto dec = arnoldi(q, unit(50, 4), 10);
    REQUIRE_FALSE(dec.breakdown);
    const Index m = dec.hess.rows();
    DenseMatrix qv(50, m);
    for (Index j = 0; j < m; ++j) qv.col(j) = q.apply(dec.basis.col(j));
    DenseMatrix resid = qv - dec.basis * dec.hess;
    resid.col(m - 1) -= dec.h_next * dec.v_next;
    REQUIRE(resid.norm() <= 1e-10 * q.norm1());
    REQUIRE((dec.basis.transpose() * dec.basis - DenseMatrix::Identity(m, m))
                .norm() <= 1e-10);
  }
}

TEST_CASE("funm_action fundamentals") {
  SECTION("zero generator returns v in one cycle") {
    Generator q = build_generator(4, {});
    Vector v(4);
    v << 0.1, 0.2, 0.3, 0.4;
    auto res = funm_action(q, v, FunKind::ExpT, 3.0);
    REQUIRE(res.converged);
    REQUIRE(res.restarts_used == 1);
    REQUIRE((res.value - v).norm() <= 1e-15);
  }
  SECTION("polynomial exactness on a nilpotent shift") {
    const Index n = 6;
    DenseMatrix s = DenseMatrix::Zero(n, n);
    for (Index i = 0; i + 1 < n; ++i) s(i + 1, i) = 1.0;
    DenseOperator op(s);
    const double t = 1.0;
    KrylovConfig cfg;
    cfg.restart_length = 6;
    auto res = funm_action(op, unit(n, 0), FunKind::ExpT, t, cfg);
    REQUIRE(res.restarts_used == 1);
    // finite Taylor sum: e^{tS} e_1 = sum_k t^k/k! e_{k+1}
    Vector want = Vector::Zero(n);
    double coeff = 1.0;
    for (Index k = 0; k < n; ++k) {
      want[k] = coeff;
      coeff *= t / static_cast<double>(k + 1);
    }
    REQUIRE((res.value - want).norm() <= 1e-12);
  }
  SECTION("agreement with dense exponential on the queue") {
    const Index n = 256;
    Generator q = queue_generator(n);
    Vector r = RewardVector::linear(n).entries;
    r /= r.norm();
    auto res = funm_action(q, r, FunKind::ExpT, 1.0);
    REQUIRE(res.converged);
    Vector want = expm(DenseMatrix(q.to_dense())) * r;
    REQUIRE((res.value - want).norm() <= 1e-6 * want.norm());
  }
  SECTION("t phi1 agreement with the eigendecomposition oracle") {
    std::mt19937 rng(4);
    Generator q = oracles::random_generator(40, 0.1, rng);
    Vector v = Vector::Ones(40) / std::sqrt(40.0);
    auto res = funm_action(q, v, FunKind::TPhi1T, 2.0);
    Vector want = oracles::tphi1_eig(q.to_dense(), 2.0, v);
    REQUIRE((res.value - want).norm() <= 1e-7 * want.norm());
  }
  SECTION("restarts are exercised and update norms recorded") {
    Generator q = queue_generator(512);
    Vector v = unit(512, 0);
    KrylovConfig cfg;
    cfg.restart_length = 8;
    auto res = funm_action(TransposeView(q), v, FunKind::ExpT, 4.0, cfg);
    REQUIRE(res.converged);
    REQUIRE(res.restarts_used >= 2);
    REQUIRE(res.update_norms.size() == static_cast<std::size_t>(res.restarts_used));
  }
  SECTION("probability conservation through the transpose operator") {
    std::mt19937 rng(12);
    Generator q = oracles::random_generator(60, 0.08, rng);
    Vector pi0 = Vector::Zero(60);
    pi0[3] = 0.5;
    pi0[10] = 0.5;
    auto res = funm_action(TransposeView(q), pi0, FunKind::ExpT, 1.5);
    REQUIRE(res.value.sum() == Catch::Approx(1.0).margin(1e-8));
  }
  SECTION("no hidden shifting: Q and Q - 0I run bitwise identically") {
    Generator q = queue_generator(32);
    Generator q_shifted = queue_generator(32); // same construction path
    Vector v = unit(32, 1);
    auto r1 = funm_action(q, v, FunKind::ExpT, 1.0);
    auto r2 = funm_action(q_shifted, v, FunKind::ExpT, 1.0);
    REQUIRE(r1.value == r2.value);
    REQUIRE(r1.update_norms == r2.update_norms);
  }
  SECTION("budget exhaustion raises ConvergenceError with the trace") {
    Generator q = queue_generator(64);
    KrylovConfig cfg;
    cfg.restart_length = 4;
    cfg.max_restarts = 2;
    try {
      funm_action(q, unit(64, 0), FunKind::ExpT, 60.0, cfg);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      REQUIRE(e.update_norms.size() == 2);
    }
  }
  SECTION("per-cycle diagnostics stay within tolerance") {
    std::mt19937 rng(15);
    Generator q = oracles::random_generator(80, 0.05, rng);
    KrylovConfig cfg;
    cfg.collect_diagnostics = true;
    Vector v = unit(80, 7);
    auto res = funm_action(TransposeView(q), v, FunKind::TPhi1T, 3.0, cfg);
    REQUIRE_FALSE(res.cycles.empty());
    for (const auto& c : res.cycles) {
      REQUIRE(c.orth_error <= 1e-10);
      REQUIRE(c.relation_residual <= 1e-10 * q.norm1());
    }
  }
}

TEST_CASE("bilinear_form") {
  SECTION("zero left vector short-circuits to zero") {
    Generator q = queue_generator(8);
    REQUIRE(bilinear_form(Vector::Zero(8), q, unit(8, 0), FunKind::ExpT, 1.0) ==
            0.0);
  }
  SECTION("two-state availability closed form") {
    oracles::TwoStateChain chain; // a = 1, b = 2
    Generator q = chain.generator();
    Vector pi0 = unit(2, 0);
    Vector ones_u = unit(2, 0); // up = state 0
    const double t = 1.0;
    const double got =
        bilinear_form(ones_u, TransposeView(q), pi0, FunKind::ExpT, t);
    REQUIRE(got == Catch::Approx(chain.availability(t)).epsilon(1e-9));
  }
}
