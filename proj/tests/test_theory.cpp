#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "expreg/bench.hpp"
#include "expreg/solver.hpp"
#include "expreg/theory.hpp"

using namespace expreg::theory;

namespace {

// Closed-form Newey condition for the standard normal, via erfc. Independent
// of the quadrature-discretization route inside the library.
double gauss_expectile_oracle(double tau) {
  auto phi = [](double t) {
    return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
  };
  auto cdf = [](double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); };
  auto gap = [&](double t) {
    const double above = phi(t) - t * (1.0 - cdf(t));
    const double below = t * cdf(t) + phi(t);
    return tau * above - (1.0 - tau) * below;
  };
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (gap(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("normal discretization matches moments and the expectile oracle") {
  const auto q = discretize_normal(0.0, 1.0);
  CHECK(std::abs(q.mean()) <= 1e-12);
  // The 200-node cloud integrates the kinked Newey integrand to ~1e-4; the
  // closed-form erfc oracle bounds that discretization error.
  for (double tau : {0.1, 0.25, 0.5, 0.75, 0.9, 0.99}) {
    CHECK(std::abs(gauss_expectile(tau) - gauss_expectile_oracle(tau)) <= 1e-3);
    // Internal consistency: the cached value is the cloud's own expectile.
    CHECK(gauss_expectile(tau) ==
          doctest::Approx(expreg::als::expectile(q, expreg::als::ALSConfig(tau)))
              .epsilon(1e-12));
  }
  // tau = 1/2 expectile of a symmetric distribution is its mean.
  CHECK(std::abs(gauss_expectile(0.5)) <= 1e-12);
}

TEST_CASE("synthetic problems satisfy their construction invariant") {
  for (const ProblemKind kind :
       {ProblemKind::noiseless_sine, ProblemKind::gauss_sine,
        ProblemKind::gauss_const, ProblemKind::twopoint_sine}) {
    for (double tau : {0.2, 0.5, 0.9}) {
      const SyntheticProblem p = make_problem(kind, tau, 2, 99, 0.3);
      CHECK(p.dim == 2);
      CHECK(p.tau == tau);
      CHECK(to_string(kind) == to_string(problem_kind_from_string(to_string(kind))));
    }
  }
  CHECK_THROWS_AS(problem_kind_from_string("nope"), std::invalid_argument);
}

TEST_CASE("noiseless sine emits exact targets") {
  const SyntheticProblem p = make_problem(ProblemKind::noiseless_sine, 0.7, 1, 1);
  expreg::Rng rng(5);
  std::vector<double> x(1);
  for (int i = 0; i < 50; ++i) {
    p.sample_x(rng, x);
    CHECK(p.sample_y(x, rng) == std::sin(2.0 * std::numbers::pi * x[0]));
    CHECK(p.target(x) == std::sin(2.0 * std::numbers::pi * x[0]));
  }
}

TEST_CASE("gaussian problems shift the target by sigma times the expectile") {
  const double tau = 0.9;
  const double sigma = 0.25;
  const SyntheticProblem p = make_problem(ProblemKind::gauss_sine, tau, 1, 2, sigma);
  const double shift = sigma * gauss_expectile(tau);
  std::vector<double> x{0.37};
  CHECK(p.target(x) ==
        doctest::Approx(std::sin(2.0 * std::numbers::pi * 0.37) + shift).epsilon(1e-12));

  const SyntheticProblem c = make_problem(ProblemKind::gauss_const, 0.5, 1, 3, sigma);
  CHECK(c.target(x) == doctest::Approx(0.3).epsilon(1e-10));
}

TEST_CASE("inner-risk sandwich check runs clean") {
  const BoundReport report = check_inner_risk_sandwich(2000, 12345);
  CHECK(report.trials == 2000);
  CHECK(report.violations == 0);
  CHECK(report.passed());
  CHECK_THROWS_AS(check_inner_risk_sandwich(0, 1), std::invalid_argument);
}

TEST_CASE("h(p) lemma") {
  CHECK(hp_value(0.5) == 1.0);
  // As p -> 0 the ratio tends to (sqrt 2 - 1)/sqrt 2 and h -> 1 from below.
  CHECK(hp_value(1e-6) < 1.0);
  CHECK(hp_value(1e-6) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK_THROWS_AS(hp_value(0.0), std::invalid_argument);
  CHECK_THROWS_AS(hp_value(0.6), std::invalid_argument);

  const BoundReport report = check_hp_lemma(500);
  CHECK(report.violations == 0);
  for (const auto& d : report.details) CHECK(d.pass);
}

TEST_CASE("calibration check returns exact zeros for f = f*") {
  const SyntheticProblem p = make_problem(ProblemKind::gauss_sine, 0.5, 1, 7, 0.3);
  const BoundReport report = check_calibration(p, p.target, 2000);
  CHECK(report.passed());
  for (const auto& d : report.details) {
    CHECK(d.lhs == 0.0);
    CHECK(d.se == 0.0);
  }
}

TEST_CASE("calibration check accepts perturbed and fitted predictors") {
  for (double tau : {0.1, 0.5, 0.9}) {
    const SyntheticProblem p =
        make_problem(ProblemKind::gauss_sine, tau, 1, 11, 0.3);
    const Fn shifted = [&p](std::span<const double> x) {
      return p.target(x) + 0.1;
    };
    const BoundReport report = check_calibration(p, shifted, 20000);
    CHECK(report.passed());
    if (tau == 0.5) {
      bool saw_equality = false;
      for (const auto& d : report.details) {
        if (d.name.find("2 excess") != std::string::npos) saw_equality = true;
      }
      CHECK(saw_equality);
    }
  }
  CHECK_THROWS_AS(
      check_calibration(make_problem(ProblemKind::gauss_sine, 0.5, 1, 1),
                        Fn([](std::span<const double>) { return 0.0; }), 10),
      std::invalid_argument);
}

TEST_CASE("variance bound check on a bounded problem") {
  for (double tau : {0.5, 0.9}) {
    const SyntheticProblem p =
        make_problem(ProblemKind::twopoint_sine, tau, 1, 13, 0.4);
    REQUIRE(p.response_bound == doctest::Approx(0.9).epsilon(1e-12));

    const Fn clipped_target = [&p](std::span<const double> x) {
      return std::clamp(p.target(x) + 0.3, -1.0, 1.0);
    };
    const BoundReport report = check_variance_bound(p, clipped_target, 1.0, 20000);
    CHECK(report.passed());
  }

  // Unbounded noise is rejected.
  const SyntheticProblem gauss = make_problem(ProblemKind::gauss_sine, 0.5, 1, 17);
  CHECK_THROWS_AS(check_variance_bound(
                      gauss, Fn([](std::span<const double>) { return 0.0; }),
                      1.0, 2000),
                  std::invalid_argument);
}

TEST_CASE("variance bound check with a clipped fitted model") {
  const double tau = 0.9;
  const SyntheticProblem p = make_problem(ProblemKind::twopoint_sine, tau, 1, 19, 0.4);
  const auto sr = expreg::bench::synth(ProblemKind::twopoint_sine, 1, 128, 21, tau, 0.4);
  const auto model = expreg::solver::fit(sr.data, tau, 1e-2, 0.5);
  REQUIRE(model.clip_level.has_value());
  REQUIRE(model.clip_level->M <= 1.0);
  const Fn f = [&model](std::span<const double> x) {
    return expreg::solver::predict_clipped(model, x);
  };
  const BoundReport report = check_variance_bound(p, f, 1.0, 20000);
  CHECK(report.passed());
}

TEST_CASE("oracle envelope on a noiseless problem decays monotonically") {
  const SyntheticProblem p = make_problem(ProblemKind::noiseless_sine, 0.5, 1, 23);
  const std::vector<std::size_t> grid{32, 64, 128};
  EnvelopeOptions options;
  options.mc_samples = 4000;
  options.repetitions = 2;
  const BoundReport report = check_oracle_envelope(p, 3.0, grid, options);
  CHECK(report.passed());
  // First envelope line is the fitting point: exact consistency.
  REQUIRE(!report.details.empty());
  CHECK(report.details.front().slack <= 1e-12);
}

TEST_CASE("analytic checks are deterministic given the seed") {
  const BoundReport a = check_inner_risk_sandwich(500, 77);
  const BoundReport b = check_inner_risk_sandwich(500, 77);
  CHECK(a.violations == b.violations);
  CHECK(std::memcmp(&a.max_slack, &b.max_slack, sizeof(double)) == 0);
}

TEST_CASE("bound reports serialize to JSON") {
  const BoundReport report = check_hp_lemma(200);
  const nlohmann::json j = report.to_json();
  CHECK(j["check"] == "hp-lemma");
  CHECK(j["violations"].get<long>() == 0);
  CHECK(j["passed"].get<bool>());
  CHECK(j["details"].is_array());
}
