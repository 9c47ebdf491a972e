#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "markfun/dense_funm.hpp"
#include "markfun/generator.hpp"
#include "oracles.hpp"

using namespace markfun;

namespace {

DenseMatrix random_matrix(Index m, double scale, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseMatrix a(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) a(i, j) = scale * u(rng);
  return a;
}

DenseMatrix random_hessenberg(Index m, double scale, std::mt19937& rng) {
  DenseMatrix h = random_matrix(m, scale, rng);
  for (Index j = 0; j + 2 < m; ++j)
    for (Index i = j + 2; i < m; ++i) h(i, j) = 0.0;
  return h;
}

} // namespace

TEST_CASE("expm basics") {
  SECTION("zero matrix") {
    DenseMatrix e = expm(DenseMatrix::Zero(4, 4));
    REQUIRE((e - DenseMatrix::Identity(4, 4)).norm() == 0.0);
  }
  SECTION("diagonal case") {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = -1.0;
    a(1, 1) = -2.0;
    DenseMatrix e = expm(a);
    REQUIRE(e(0, 0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-14));
    REQUIRE(e(1, 1) == Catch::Approx(std::exp(-2.0)).epsilon(1e-14));
    REQUIRE(std::abs(e(0, 1)) < 1e-16);
  }
  SECTION("two-state generator against the spectral closed form") {
    // eigenvalues {0, -(a+b)}: e^Q = ones*pi^T + e^{-(a+b)} (I - ones*pi^T)
    const double a = 1.0, b = 2.0;
    DenseMatrix q(2, 2);
    q << -a, a, b, -b;
    DenseMatrix pi_part(2, 2);
    pi_part << b, a, b, a;
    pi_part /= (a + b);
    DenseMatrix want =
        pi_part + std::exp(-(a + b)) * (DenseMatrix::Identity(2, 2) - pi_part);
    REQUIRE((expm(q) - want).norm() <= 1e-14);
  }
  SECTION("non-finite input is rejected") {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 1) = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(expm(a), ValidationError);
  }
}

TEST_CASE("expm against the eigendecomposition oracle across norms") {
  std::mt19937 rng(123);
  for (double scale : {0.01, 0.5, 3.0, 20.0}) {
    DenseMatrix a = random_matrix(8, scale, rng);
    DenseMatrix want = oracles::expm_eig(a);
    REQUIRE((expm(a) - want).norm() <= 1e-9 * want.norm());
  }
}

TEST_CASE("expm(A) expm(-A) = I") {
  std::mt19937 rng(77);
  for (int rep = 0; rep < 8; ++rep) {
    const Index m = 3 + static_cast<Index>(rng() % 18);
    DenseMatrix a = random_matrix(m, 0.8, rng);
    const double n1 = a.cwiseAbs().colwise().sum().maxCoeff();
    if (n1 > 10.0) a *= 10.0 / n1;
    DenseMatrix prod = expm(a) * expm(DenseMatrix(-a));
    REQUIRE((prod - DenseMatrix::Identity(m, m)).norm() <= 1e-10);
  }
}

TEST_CASE("expm of a generator is row stochastic") {
  std::mt19937 rng(5150);
  Generator q = oracles::random_generator(25, 0.15, rng);
  for (double t : {0.3, 1.0, 4.0}) {
    DenseMatrix p = expm(DenseMatrix(t * q.to_dense()));
    for (Index i = 0; i < p.rows(); ++i) {
      REQUIRE(p.row(i).sum() == Catch::Approx(1.0).margin(1e-12));
      REQUIRE(p.row(i).minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("expm_action_series oracle behaviour") {
  SECTION("zero matrix returns v") {
    Vector v(3);
    v << 1.0, -2.0, 0.5;
    REQUIRE((expm_action_series(DenseMatrix::Zero(3, 3), v) - v).norm() == 0.0);
  }
  SECTION("2x2 triangular closed form") {
    // e^A = [[e^{-1}, 1-e^{-1}], [0, 1]] for A = [[-1,1],[0,0]]
    DenseMatrix a(2, 2);
    a << -1.0, 1.0, 0.0, 0.0;
    Vector v(2);
    v << 1.0, 0.0;
    Vector y = expm_action_series(a, v, 1e-14);
    REQUIRE(y[0] == Catch::Approx(std::exp(-1.0)).epsilon(1e-13));
    REQUIRE(y[1] == Catch::Approx(0.0).margin(1e-15));
    Vector e2(2);
    e2 << 0.0, 1.0;
    Vector y2 = expm_action_series(a, e2, 1e-14);
    REQUIRE(y2[0] == Catch::Approx(1.0 - std::exp(-1.0)).epsilon(1e-13));
    REQUIRE(y2[1] == Catch::Approx(1.0).epsilon(1e-14));
  }
  SECTION("agrees with expm on random 8x8") {
    std::mt19937 rng(31);
    DenseMatrix a = random_matrix(8, 0.7, rng);
    Vector v(8);
    for (Index i = 0; i < 8; ++i) v[i] = 1.0 / (1.0 + static_cast<double>(i));
    Vector want = expm(a) * v;
    REQUIRE((expm_action_series(a, v, 1e-15) - want).norm() <=
            1e-12 * want.norm());
  }
}

TEST_CASE("phi1_action") {
  SECTION("A = 0 gives v back") {
    Vector v(4);
    v << 4.0, 3.0, 2.0, 1.0;
    REQUIRE((phi1_action(DenseMatrix::Zero(4, 4), v) - v).norm() <= 1e-14);
  }
  SECTION("scalar value (e^{-2}-1)/(-2)") {
    DenseMatrix a(1, 1);
    a << -2.0;
    Vector v(1);
    v << 1.0;
    REQUIRE(phi1_action(a, v)[0] ==
            Catch::Approx(0.43233235838169365).epsilon(1e-12));
  }
  SECTION("A phi1(A) v = (e^A - I) v for invertible A") {
    std::mt19937 rng(8);
    DenseMatrix a = random_matrix(6, 1.0, rng);
    a += 3.0 * DenseMatrix::Identity(6, 6); // push away from singularity
    Vector v(6);
    for (Index i = 0; i < 6; ++i) v[i] = std::sin(static_cast<double>(i) + 1.0);
    Vector lhs = a * phi1_action(a, v);
    Vector rhs = (expm(a) - DenseMatrix::Identity(6, 6)) * v;
    const double ea_norm = expm(a).norm();
    REQUIRE((lhs - rhs).norm() <= 1e-10 * v.norm() * ea_norm);
  }
  SECTION("solve-based oracle on a random 6x6") {
    std::mt19937 rng(9);
    DenseMatrix a = random_matrix(6, 1.0, rng);
    a -= 2.5 * DenseMatrix::Identity(6, 6);
    Vector v = Vector::Ones(6);
    Vector want = a.partialPivLu().solve(
        (expm(a) - DenseMatrix::Identity(6, 6)) * v);
    REQUIRE((phi1_action(a, v) - want).norm() <= 1e-10 * want.norm());
  }
}

TEST_CASE("funm_hessenberg") {
  SECTION("H = 0 with t phi1 gives t I") {
    DenseMatrix f = funm_hessenberg(DenseMatrix::Zero(3, 3), FunKind::TPhi1T, 5.0);
    REQUIRE((f - 5.0 * DenseMatrix::Identity(3, 3)).norm() <= 1e-14);
  }
  SECTION("scalar exponential") {
    DenseMatrix h(1, 1);
    h << -1.0;
    DenseMatrix f = funm_hessenberg(h, FunKind::ExpT, 2.0);
    REQUIRE(f(0, 0) == Catch::Approx(std::exp(-2.0)).epsilon(1e-14));
  }
  SECTION("3x3 Hessenberg matches the dense oracles") {
    std::mt19937 rng(21);
    DenseMatrix h = random_hessenberg(3, 1.0, rng);
    const double t = 1.7;
    REQUIRE((funm_hessenberg(h, FunKind::ExpT, t) -
             oracles::expm_eig(DenseMatrix(t * h)))
                .norm() <= 1e-11);
    Vector e0 = Vector::Zero(3);
    e0[0] = 1.0;
    REQUIRE((funm_hessenberg(h, FunKind::TPhi1T, t).col(0) -
             oracles::tphi1_eig(h, t, e0))
                .norm() <= 1e-11);
  }
  SECTION("first-column fast path agrees with the full evaluation") {
    std::mt19937 rng(22);
    for (FunKind kind : {FunKind::ExpT, FunKind::TPhi1T}) {
      DenseMatrix h = random_hessenberg(12, 0.8, rng);
      Vector full = funm_hessenberg(h, kind, 2.5).col(0);
      Vector fast = funm_hessenberg_e1(h, kind, 2.5);
      REQUIRE((full - fast).norm() <= 1e-12 * std::max(1.0, full.norm()));
    }
  }
  SECTION("small t expansion: f ~ t I") {
    std::mt19937 rng(23);
    DenseMatrix h = random_hessenberg(5, 1.0, rng);
    const double t = 1e-8;
    DenseMatrix f = funm_hessenberg(h, FunKind::TPhi1T, t);
    REQUIRE((f - t * DenseMatrix::Identity(5, 5)).cwiseAbs().maxCoeff() <=
            1e-12);
  }
  SECTION("non-Hessenberg input is rejected") {
    DenseMatrix bad = DenseMatrix::Ones(4, 4);
    REQUIRE_THROWS_AS(funm_hessenberg(bad, FunKind::ExpT, 1.0),
                      ValidationError);
  }
}

TEST_CASE("PadeConfig validation") {
  PadeConfig bad;
  bad.degree_table = {{3, 0.1}, {4, 0.2}};
  REQUIRE_THROWS_AS(expm(DenseMatrix::Zero(2, 2), bad), ValidationError);
  PadeConfig decreasing;
  decreasing.degree_table = {{3, 0.5}, {5, 0.1}};
  REQUIRE_THROWS_AS(expm(DenseMatrix::Zero(2, 2), decreasing), ValidationError);
}
