#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "expreg/errors.hpp"
#include "expreg/io.hpp"
#include "expreg/rng.hpp"

using namespace expreg::io;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "expreg_test_io";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

TEST_CASE("dataset CSV round trip preserves every bit") {
  expreg::Rng rng(81);
  const std::size_t n = 40, d = 3;
  std::vector<double> xs(n * d), ys(n);
  for (auto& v : xs) v = rng.uniform(-2.0, 2.0);
  for (auto& v : ys) v = rng.normal();
  const expreg::Dataset data(xs, ys, d);

  const auto path = (temp_dir() / "roundtrip.csv").string();
  write_dataset_csv(data, path);
  const expreg::Dataset loaded = read_dataset_csv(path);

  REQUIRE(loaded.n() == n);
  REQUIRE(loaded.dim() == d);
  CHECK(std::memcmp(loaded.x().data(), data.x().data(), n * d * sizeof(double)) == 0);
  CHECK(std::memcmp(loaded.y().data(), data.y().data(), n * sizeof(double)) == 0);
}

TEST_CASE("dataset CSV validation") {
  const auto dir = temp_dir();
  CHECK_THROWS_AS(read_dataset_csv((dir / "missing.csv").string()), expreg::io_error);

  write_file(dir / "no_y.csv", "x1,x2\n0.1,0.2\n");
  CHECK_THROWS_AS(read_dataset_csv((dir / "no_y.csv").string()), expreg::io_error);

  write_file(dir / "bad_field.csv", "x1,y\n0.1,zzz\n");
  CHECK_THROWS_AS(read_dataset_csv((dir / "bad_field.csv").string()), expreg::io_error);

  write_file(dir / "ragged.csv", "x1,y\n0.1,0.2\n0.3\n");
  CHECK_THROWS_AS(read_dataset_csv((dir / "ragged.csv").string()), expreg::io_error);

  write_file(dir / "empty.csv", "x1,y\n");
  CHECK_THROWS_AS(read_dataset_csv((dir / "empty.csv").string()), expreg::io_error);

  // Locale-independent '.' decimals and blank-line tolerance.
  write_file(dir / "ok.csv", "x1,y\n\n1.5e-1,-2.25\n");
  const expreg::Dataset ok = read_dataset_csv((dir / "ok.csv").string());
  CHECK(ok.x()[0] == 0.15);
  CHECK(ok.y()[0] == -2.25);
}

TEST_CASE("covariate CSV accepts x-only and full headers, even empty") {
  const auto dir = temp_dir();
  write_file(dir / "cov.csv", "x1,x2\n0.1,0.2\n0.3,0.4\n");
  const Covariates c = read_covariates_csv((dir / "cov.csv").string());
  CHECK(c.n == 2);
  CHECK(c.dim == 2);

  write_file(dir / "with_y.csv", "x1,x2,y\n0.1,0.2,9.0\n");
  const Covariates cy = read_covariates_csv((dir / "with_y.csv").string());
  CHECK(cy.n == 1);
  CHECK(cy.dim == 2);
  CHECK(cy.x[1] == 0.2);

  write_file(dir / "empty_cov.csv", "x1\n");
  const Covariates ce = read_covariates_csv((dir / "empty_cov.csv").string());
  CHECK(ce.n == 0);
  CHECK(ce.dim == 1);
}

TEST_CASE("distribution CSV round trip") {
  const expreg::als::DiscreteDistribution q({{-1.0, 0.25}, {0.5, 0.5}, {2.0, 0.25}});
  const auto path = (temp_dir() / "dist.csv").string();
  write_distribution_csv(q, path);
  const auto loaded = read_distribution_csv(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded.atoms()[i].value == q.atoms()[i].value);
    CHECK(loaded.atoms()[i].mass == q.atoms()[i].mass);
  }

  write_file(temp_dir() / "bad_dist.csv", "value,mass\n0.0,0.4\n1.0,0.4\n");
  CHECK_THROWS_AS(read_distribution_csv((temp_dir() / "bad_dist.csv").string()),
                  expreg::io_error);
  write_file(temp_dir() / "bad_header.csv", "v,m\n0.0,1.0\n");
  CHECK_THROWS_AS(read_distribution_csv((temp_dir() / "bad_header.csv").string()),
                  expreg::io_error);
}

TEST_CASE("eigenvalue, table, and prediction writers emit the documented headers") {
  const auto dir = temp_dir();

  const std::vector<double> eigs{0.9, 0.1};
  write_eigenvalues_csv(eigs, (dir / "eigs.csv").string());
  std::ifstream ein(dir / "eigs.csv");
  std::string line;
  std::getline(ein, line);
  CHECK(line == "i,lambda");
  std::getline(ein, line);
  CHECK(line.substr(0, 2) == "1,");

  std::vector<expreg::selection::TVCell> table(2);
  table[0] = {0.5, 0.25, 0.125, true};
  table[1] = {0.5, 0.1, 0.0, false};
  write_validation_table_csv(table, (dir / "table.csv").string());
  std::ifstream tin(dir / "table.csv");
  std::getline(tin, line);
  CHECK(line == "lambda,gamma,risk");
  std::getline(tin, line);
  CHECK(line == "0.5,0.25,0.125");
  std::getline(tin, line);
  CHECK(line.substr(0, 4) == "0.5,");
  CHECK(line.substr(line.size() - 4) == ",nan");

  const std::vector<double> preds{1.0, -0.5};
  write_predictions_csv(preds, (dir / "preds.csv").string());
  std::ifstream pin(dir / "preds.csv");
  std::getline(pin, line);
  CHECK(line == "prediction");
}
