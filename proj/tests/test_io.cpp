#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "markfun/matrix_market.hpp"
#include "markfun/models.hpp"
#include "oracles.hpp"

using namespace markfun;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("markfun_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

} // namespace

TEST_CASE("matrix market round trip preserves a generator bit for bit") {
  TempDir tmp;
  std::mt19937 rng(55);
  Generator q = oracles::random_generator(30, 0.1, rng);
  const std::string path = tmp.file("q.mtx");
  write_generator(path, q, "round trip test");
  GeneratorReadResult r = read_generator(path);
  REQUIRE(r.warnings.empty());
  REQUIRE(r.generator.size() == q.size());
  REQUIRE((r.generator.to_dense() - q.to_dense()).norm() == 0.0);
}

TEST_CASE("generator ingestion recomputes the diagonal") {
  TempDir tmp;
  const std::string path = tmp.file("gen.mtx");
  SECTION("disagreeing diagonal draws a warning but parses") {
    std::ofstream out(path);
    out << "%%MatrixMarket matrix coordinate real general\n"
        << "2 2 3\n"
        << "1 2 1.5\n"
        << "1 1 -2.0\n" // should be -1.5
        << "2 1 0.5\n";
    out.close();
    GeneratorReadResult r = read_generator(path);
    REQUIRE(r.warnings.size() == 1);
    REQUIRE(r.generator.diagonal()[0] == -1.5);
  }
  SECTION("negative off-diagonal is rejected") {
    std::ofstream out(path);
    out << "%%MatrixMarket matrix coordinate real general\n"
        << "2 2 1\n"
        << "1 2 -1.0\n";
    out.close();
    REQUIRE_THROWS_AS(read_generator(path), ValidationError);
  }
  SECTION("malformed headers are io errors") {
    std::ofstream out(path);
    out << "%%MatrixMarket matrix array real general\n1 1\n1.0\n";
    out.close();
    REQUIRE_THROWS_AS(read_generator(path), IoError);
    REQUIRE_THROWS_AS(read_generator(tmp.file("missing.mtx")), IoError);
  }
}

TEST_CASE("1-indexed convention in files, 0-indexed in memory") {
  TempDir tmp;
  const std::string path = tmp.file("idx.mtx");
  std::ofstream out(path);
  out << "%%MatrixMarket matrix coordinate real general\n"
      << "3 3 1\n"
      << "1 3 2.0\n";
  out.close();
  MatrixMarketData data = read_matrix_market(path);
  REQUIRE(data.entries.size() == 1);
  REQUIRE(data.entries[0].row == 0);
  REQUIRE(data.entries[0].col == 2);
}

TEST_CASE("model export and import round trip") {
  TempDir tmp;
  ModelBundle b = build_model("attack", {{"N", 3}});
  const std::string prefix = tmp.file("attack3");
  export_model(b, prefix);
  ModelBundle back = import_model(prefix + ".mtx", prefix + ".json");
  REQUIRE(back.name == "attack");
  REQUIRE(back.q.size() == b.q.size());
  REQUIRE((back.q.to_dense() - b.q.to_dense()).norm() == 0.0);
  REQUIRE(back.partition.up == b.partition.up);
  REQUIRE(back.partition.absorbing_down == b.partition.absorbing_down);
  REQUIRE((back.reward.entries - b.reward.entries).norm() == 0.0);
  REQUIRE((back.pi0.entries - b.pi0.entries).norm() == 0.0);
  REQUIRE(back.state_labels == b.state_labels);
  REQUIRE(back.params.at("N") == 3.0);
}

TEST_CASE("direction matrices round trip through matrix market") {
  TempDir tmp;
  ModelBundle b = build_model("queue", {{"n", 6}});
  DirectionMatrix e = model_direction("queue", b.params, "rho2");
  const std::string path = tmp.file("dir.mtx");
  write_matrix_market(path, e.dim(), e.dim(), e.to_triplets());
  MatrixMarketData data = read_matrix_market(path);
  DirectionMatrix back = DirectionMatrix::from_triplets(data.rows, data.entries);
  REQUIRE((back.to_dense() - e.to_dense()).norm() == 0.0);
}
