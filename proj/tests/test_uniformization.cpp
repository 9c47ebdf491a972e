#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "markfun/uniformization.hpp"
#include "oracles.hpp"

using namespace markfun;

namespace {

Generator queue_generator(Index n, double rho1 = 1.0, double rho2 = 1.0) {
  std::vector<Triplet> ts;
  for (Index i = 0; i + 1 < n; ++i) ts.push_back({i, i + 1, rho2});
  for (Index i = 1; i < n; ++i) ts.push_back({i, i - 1, rho1});
  return build_generator(n, ts);
}

} // namespace

TEST_CASE("uniformize") {
  SECTION("zero generator gets q = 1 and P = I") {
    auto chain = uniformize(build_generator(3, {}));
    REQUIRE(chain.q == 1.0);
    REQUIRE((chain.p.to_dense() - DenseMatrix::Identity(3, 3)).norm() == 0.0);
  }
  SECTION("two-state chain with the default safety factor") {
    Generator q = build_generator(2, {{0, 1, 1.0}, {1, 0, 2.0}});
    auto chain = uniformize(q, 1.02);
    REQUIRE(chain.q == Catch::Approx(2.04).epsilon(1e-15));
    DenseMatrix want = DenseMatrix::Identity(2, 2) + q.to_dense() / 2.04;
    REQUIRE((chain.p.to_dense() - want).norm() <= 1e-15);
  }
  SECTION("queue uniformization is row stochastic") {
    auto chain = uniformize(queue_generator(64));
    REQUIRE(chain.q == Catch::Approx(2.04).epsilon(1e-15));
    Vector rs = chain.p.row_sums();
    for (Index i = 0; i < rs.size(); ++i)
      REQUIRE(rs[i] == Catch::Approx(1.0).margin(1e-14));
  }
  SECTION("safety factor must exceed one") {
    REQUIRE_THROWS_AS(uniformize(queue_generator(4), 1.0), ValidationError);
  }
}

TEST_CASE("transient") {
  SECTION("t = 0 returns pi0") {
    Generator q = queue_generator(5);
    auto chain = uniformize(q);
    Vector pi0 = Vector::Zero(5);
    pi0[2] = 1.0;
    REQUIRE((transient(chain, pi0, 0.0) - pi0).norm() == 0.0);
  }
  SECTION("two-state chain matches the closed form") {
    oracles::TwoStateChain c;
    auto chain = uniformize(c.generator());
    Vector pi0 = Vector::Zero(2);
    pi0[0] = 1.0;
    Vector pt = transient(chain, pi0, 1.0, 1e-10);
    REQUIRE(pt[0] == Catch::Approx(c.availability(1.0)).margin(1e-9));
    REQUIRE(pt.sum() == Catch::Approx(1.0).margin(1e-10));
  }
  SECTION("distribution validity on a random chain") {
    std::mt19937 rng(2024);
    Generator q = oracles::random_generator(50, 0.1, rng);
    auto chain = uniformize(q);
    Vector pi0 = Vector::Constant(50, 1.0 / 50.0);
    for (double t : {0.5, 5.0, 25.0}) {
      Vector pt = transient(chain, pi0, t, 1e-9);
      REQUIRE(pt.minCoeff() >= -1e-12);
      REQUIRE(pt.sum() == Catch::Approx(1.0).margin(1e-9));
    }
  }
  SECTION("matches the dense exponential oracle") {
    std::mt19937 rng(404);
    Generator q = oracles::random_generator(30, 0.15, rng);
    auto chain = uniformize(q);
    Vector pi0 = Vector::Zero(30);
    pi0[0] = 1.0;
    Vector want = oracles::expm_eig(q.to_dense()).transpose() * pi0;
    REQUIRE((transient(chain, pi0, 1.0, 1e-12) - want).norm() <= 1e-9);
  }
}

TEST_CASE("cumulative") {
  SECTION("t = 0 gives the zero vector") {
    auto chain = uniformize(queue_generator(4));
    REQUIRE(cumulative(chain, Vector::Ones(4) / 4.0, 0.0).norm() == 0.0);
  }
  SECTION("total mass integrates to t") {
    std::mt19937 rng(11);
    Generator q = oracles::random_generator(40, 0.1, rng);
    auto chain = uniformize(q);
    Vector pi0 = Vector::Zero(40);
    pi0[5] = 1.0;
    for (double t : {0.25, 1.0, 10.0})
      REQUIRE(cumulative(chain, pi0, t, 1e-10).sum() ==
              Catch::Approx(t).margin(1e-8 * std::max(1.0, t)));
  }
  SECTION("two-state cumulative availability closed form") {
    oracles::TwoStateChain c;
    auto chain = uniformize(c.generator());
    Vector pi0 = Vector::Zero(2);
    pi0[0] = 1.0;
    Vector lt = cumulative(chain, pi0, 1.0, 1e-11);
    REQUIRE(lt[0] ==
            Catch::Approx(c.cumulative_availability(1.0)).margin(1e-9));
  }
  SECTION("entrywise monotone in t") {
    Generator q = queue_generator(12);
    auto chain = uniformize(q);
    Vector pi0 = Vector::Zero(12);
    pi0[0] = 1.0;
    Vector prev = Vector::Zero(12);
    for (double t : {0.5, 1.0, 2.0, 4.0}) {
      Vector cur = cumulative(chain, pi0, t, 1e-10);
      REQUIRE(((cur - prev).array() >= -1e-10).all());
      REQUIRE(cur.maxCoeff() <= t + 1e-8);
      prev = cur;
    }
  }
}

TEST_CASE("poisson term budget is enforced") {
  Generator q = queue_generator(4, 1e6, 1e6);
  auto chain = uniformize(q);
  Vector pi0 = Vector::Zero(4);
  pi0[0] = 1.0;
  REQUIRE_THROWS_AS(transient(chain, pi0, 1e3, 1e-8), ResourceError);
}
