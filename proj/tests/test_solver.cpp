#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "expreg/errors.hpp"
#include "expreg/rng.hpp"
#include "expreg/solver.hpp"

using expreg::Dataset;
using expreg::Rng;
using namespace expreg::solver;

namespace {

// Test-side dense linear solver: Gaussian elimination with partial pivoting,
// independent of the Cholesky path inside fit().
std::vector<double> lu_solve(std::vector<std::vector<double>> a,
                             std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) acc -= a[ri][c] * x[c];
    x[ri] = acc / a[ri][ri];
  }
  return x;
}

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d,
                       double noise = 0.1) {
  std::vector<double> xs(n * d);
  std::vector<double> ys(n);
  for (auto& v : xs) v = rng.uniform();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += xs[i * d + c];
    ys[i] = std::sin(2.0 * s) + noise * rng.normal();
  }
  return Dataset(std::move(xs), std::move(ys), d);
}

}  // namespace

TEST_CASE("single-sample fit has the stationary closed form") {
  // lambda c^2 + tau (y - c)^2 is minimized at c = tau y / (lambda + tau).
  Dataset data({0.0}, {1.0}, 1);
  const ExpectileModel m = fit(data, 0.9, 0.5, 1.0);
  CHECK(m.coefficients.size() == 1);
  CHECK(m.coefficients[0] == doctest::Approx(0.9 / 1.4).epsilon(1e-12));
}

TEST_CASE("tau = 1/2 reduces to kernel ridge (G + 2 n lambda I) c = y") {
  Rng rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 10 + static_cast<std::size_t>(rng.uniform_int(0, 40));
    const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const double lambda = std::pow(10.0, rng.uniform(-3.0, -0.5));
    const double gamma = rng.uniform(0.3, 1.0);
    const Dataset data = random_dataset(rng, n, d);

    const ExpectileModel m = fit(data, 0.5, lambda, gamma);

    const auto g = expreg::kernel::gram(expreg::kernel::GaussianKernel(gamma),
                                        data.x(), n, d);
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a[i][j] = g.entries(static_cast<long>(i), static_cast<long>(j));
      }
      a[i][i] += 2.0 * static_cast<double>(n) * lambda;
    }
    const auto oracle = lu_solve(std::move(a), data.y());

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += (m.coefficients[i] - oracle[i]) * (m.coefficients[i] - oracle[i]);
      den += oracle[i] * oracle[i];
    }
    CHECK(std::sqrt(num) <= 1e-8 * (1.0 + std::sqrt(den)));
  }
}

TEST_CASE("all-zero responses give the zero model") {
  Dataset data({0.1, 0.4, 0.9}, {0.0, 0.0, 0.0}, 1);
  const ExpectileModel m = fit(data, 0.7, 0.1, 0.5);
  for (double c : m.coefficients) CHECK(c == 0.0);
  CHECK(m.diagnostics.objective == 0.0);
  CHECK_FALSE(m.clip_level.has_value());
}

TEST_CASE("prediction follows the representer form") {
  ExpectileModel m;
  m.support_points = {0.0};
  m.n = 1;
  m.dim = 1;
  m.coefficients = {1.0};
  m.kern = expreg::kernel::GaussianKernel(1.0);

  const std::vector<double> at_support{0.0};
  const std::vector<double> at_distance{1.0};
  CHECK(predict(m, at_support) == 1.0);
  CHECK(predict(m, at_distance) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  m.coefficients = {0.0};
  CHECK(predict(m, at_distance) == 0.0);

  const std::vector<double> wrong_dim{0.0, 0.0};
  CHECK_THROWS_AS(predict(m, wrong_dim), std::invalid_argument);
}

TEST_CASE("clipped prediction") {
  ExpectileModel m;
  m.support_points = {0.0};
  m.n = 1;
  m.dim = 1;
  m.coefficients = {1.5};
  m.kern = expreg::kernel::GaussianKernel(1.0);
  const std::vector<double> x{0.0};

  CHECK_THROWS_AS(predict_clipped(m, x), std::invalid_argument);
  m.clip_level = expreg::als::ClipLevel(1.0);
  CHECK(predict_clipped(m, x) == 1.0);
  m.coefficients = {-0.2};
  CHECK(predict_clipped(m, x) == -0.2);
  m.coefficients = {-9.0};
  m.clip_level = expreg::als::ClipLevel(2.0);
  CHECK(predict_clipped(m, x) == -2.0);
}

TEST_CASE("empirical risk") {
  Dataset data({0.25, 0.75}, {1.0, -1.0}, 1);
  const auto zero = [](std::span<const double>) { return 0.0; };
  CHECK(empirical_risk(zero, data, 0.5) == doctest::Approx(0.5).epsilon(1e-15));

  Dataset one({0.5}, {1.0}, 1);
  CHECK(empirical_risk(zero, one, 0.9) == doctest::Approx(0.9).epsilon(1e-15));

  // A perfect interpolant has zero risk.
  const auto interpolant = [](std::span<const double> x) {
    return 2.0 * x[0] - 1.0;
  };
  Dataset line({0.0, 0.5, 1.0}, {-1.0, 0.0, 1.0}, 1);
  CHECK(empirical_risk(interpolant, line, 0.3) == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(59);
  const std::size_t n = 12;
  const Dataset data = random_dataset(rng, n, 2);
  const auto g = expreg::kernel::gram(expreg::kernel::GaussianKernel(0.6),
                                      data.x(), n, 2);
  const double tau = 0.85;
  const double lambda = 0.05;

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> c(n);
    for (auto& v : c) v = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd grad = objective_gradient(g, data.y(), tau, lambda, c);
    const double h = 1e-6;
    for (std::size_t k = 0; k < n; k += 3) {
      std::vector<double> cp = c, cm = c;
      cp[k] += h;
      cm[k] -= h;
      const double fd = (objective(g, data.y(), tau, lambda, cp) -
                         objective(g, data.y(), tau, lambda, cm)) /
                        (2.0 * h);
      const double an = grad(static_cast<long>(k));
      CHECK(std::abs(fd - an) <= 1e-5 * (1.0 + std::abs(an)));
    }
  }
}

TEST_CASE("fit satisfies its optimality contract") {
  Rng rng(61);
  for (double tau : {0.1, 0.5, 0.9}) {
    const std::size_t n = 40;
    const Dataset data = random_dataset(rng, n, 1);
    const double lambda = 0.01;
    const double gamma = 0.4;
    const ExpectileModel m = fit(data, tau, lambda, gamma);

    CHECK(m.diagnostics.gradient_norm <= 1e-8 * (1.0 + data.max_abs_y()));

    // Objective trace is nonincreasing and starts at the all-zeros objective.
    const auto& trace = m.diagnostics.objective_trace;
    REQUIRE(trace.size() >= 1);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      CHECK(trace[i] <= trace[i - 1]);
    }

    const auto g = expreg::kernel::gram(expreg::kernel::GaussianKernel(gamma),
                                        data.x(), n, 1);
    const double j_star =
        objective(g, data.y(), tau, lambda, m.coefficients);
    CHECK(j_star == doctest::Approx(m.diagnostics.objective).epsilon(1e-12));
    CHECK(j_star <= trace.front());

    // IRLS fixed point: c solves (G + n lambda W^-1) c = y with the weight
    // pattern recomputed from c itself.
    Eigen::Map<const Eigen::VectorXd> c(m.coefficients.data(), n);
    Eigen::Map<const Eigen::VectorXd> y(data.y().data(), n);
    const Eigen::VectorXd gc = g.entries * c;
    Eigen::MatrixXd a = g.entries;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = (y(static_cast<long>(i)) - gc(static_cast<long>(i)) >= 0.0)
                           ? tau
                           : 1.0 - tau;
      a(static_cast<long>(i), static_cast<long>(i)) +=
          static_cast<double>(n) * lambda / w;
    }
    const double residual = (a * c - y).norm();
    CHECK(residual <= 1e-8 * (1.0 + y.norm()));

    // Optimality sampling: no random perturbation with ||delta|| <= 1e-2
    // does better (up to the convexity slack grad_norm * ||delta||).
    const double slack = m.diagnostics.gradient_norm * 1e-2 + 1e-12;
    for (int s = 0; s < 2000; ++s) {
      std::vector<double> cp = m.coefficients;
      double norm2 = 0.0;
      std::vector<double> delta(n);
      for (auto& v : delta) {
        v = rng.normal();
        norm2 += v * v;
      }
      const double scale = 1e-2 * rng.uniform() / std::sqrt(norm2);
      for (std::size_t k = 0; k < n; ++k) cp[k] += scale * delta[k];
      CHECK(objective(g, data.y(), tau, lambda, cp) >= j_star - slack);
    }
  }
}

TEST_CASE("clipping never increases the empirical risk of bounded data") {
  Rng rng(67);
  const std::size_t n = 50;
  const Dataset data = random_dataset(rng, n, 1, 0.3);
  const double bound = data.max_abs_y();
  expreg::solver::FitOptions options;
  options.clip_level = bound;
  const ExpectileModel m = fit(data, 0.8, 1e-4, 0.3, options);
  CHECK(empirical_risk(m, data, 0.8, true) <=
        empirical_risk(m, data, 0.8, false) + 1e-15);
}

TEST_CASE("input validation") {
  Dataset data({0.0}, {1.0}, 1);
  CHECK_THROWS_AS(fit(data, 0.0, 0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(fit(data, 1.0, 0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(fit(data, 0.5, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(fit(data, 0.5, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(Dataset({1.0}, {std::nan("")}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Dataset({1.0}, {2.0}, 1, 1.5), std::invalid_argument);
}

TEST_CASE("wide kernels are allowed in the solver but flagged") {
  Rng rng(71);
  const Dataset data = random_dataset(rng, 15, 1);
  const ExpectileModel m = fit(data, 0.5, 0.01, 2.5);
  CHECK(m.diagnostics.width_above_unit);
}

TEST_CASE("model persistence reproduces predictions bit for bit") {
  Rng rng(73);
  const auto dir = std::filesystem::temp_directory_path() / "expreg_test_models";
  std::filesystem::create_directories(dir);

  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 30));
    const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const Dataset data = random_dataset(rng, n, d, 0.2);
    const double tau = rng.uniform(0.05, 0.95);
    const double lambda = std::pow(10.0, rng.uniform(-4.0, -1.0));
    const double gamma = rng.uniform(0.2, 1.0);
    const ExpectileModel m = fit(data, tau, lambda, gamma);

    const std::string path = (dir / ("m" + std::to_string(trial) + ".json")).string();
    save_model(m, path);
    const ExpectileModel loaded = load_model(path);

    CHECK(loaded.n == m.n);
    CHECK(loaded.dim == m.dim);
    CHECK(std::memcmp(loaded.coefficients.data(), m.coefficients.data(),
                      n * sizeof(double)) == 0);
    for (int probe = 0; probe < 10; ++probe) {
      std::vector<double> x(d);
      for (auto& v : x) v = rng.uniform(-0.5, 1.5);
      const double a = predict(m, x);
      const double b = predict(loaded, x);
      CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed model documents are I/O errors") {
  const auto dir = std::filesystem::temp_directory_path() / "expreg_test_bad";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "bad.json").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("{\"tau\": 0.5}", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_model(path), expreg::io_error);
  CHECK_THROWS_AS(load_model((dir / "missing.json").string()), expreg::io_error);
  std::filesystem::remove_all(dir);
}
