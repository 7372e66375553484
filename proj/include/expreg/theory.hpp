#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "expreg/als.hpp"
#include "expreg/dataset.hpp"
#include "expreg/rng.hpp"

namespace expreg::theory {

enum class ProblemKind {
  noiseless_sine,  // y = sin(2 pi mean(x)) exactly
  gauss_sine,      // y = sin(2 pi mean(x)) + sigma * N(0,1)
  gauss_const,     // y = 0.3 + sigma * N(0,1)
  twopoint_sine,   // y = 0.5 sin(2 pi mean(x)) +- sigma, bounded responses
};

ProblemKind problem_kind_from_string(const std::string& name);
std::string to_string(ProblemKind kind);

/// Synthetic regression problem whose conditional tau-expectile is known in
/// closed form. Construction re-derives the target from the conditional
/// distribution at 100 probe points through the discrete expectile oracle
/// and rejects the problem if they disagree beyond 1e-10.
struct SyntheticProblem {
  int dim = 1;
  double tau = 0.5;
  std::uint64_t seed = 0;
  /// Conditional tau-expectile f*(x).
  std::function<double(std::span<const double>)> target;
  /// Covariate sampler on [0,1]^d.
  std::function<void(Rng&, std::span<double>)> sample_x;
  /// Draws y given x.
  std::function<double(std::span<const double>, Rng&)> sample_y;
  /// Discretized conditional distribution of y given x (oracle input).
  std::function<als::DiscreteDistribution(std::span<const double>)> conditional;
  /// Almost-sure bound on |y| when finite; +inf for unbounded noise.
  double response_bound = 0.0;
};

SyntheticProblem make_problem(ProblemKind kind, double tau, int d,
                              std::uint64_t seed, double noise_scale = 0.2);

/// 200-node Gauss-Legendre discretization of N(mean, sigma^2) on +-8 sigma.
als::DiscreteDistribution discretize_normal(double mean, double sigma,
                                            int nodes = 200);

/// tau-expectile of the standard normal, computed once per tau by quadrature
/// plus root finding and cached.
double gauss_expectile(double tau);

struct CheckDetail {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // lhs - rhs; positive means the inequality failed
  double se = 0.0;     // Monte Carlo standard error of the slack, 0 if exact
  bool pass = true;
};

struct BoundReport {
  std::string check;
  long trials = 0;
  long violations = 0;
  double max_slack = 0.0;
  std::vector<CheckDetail> details;

  bool passed() const { return violations == 0; }
  nlohmann::json to_json() const;
};

using Fn = std::function<double(std::span<const double>)>;

/// Self-calibration sandwich: C_tau^-1 excess <= ||f - f*||^2_{L2(P_X)}
/// <= c_tau^-1 excess, checked by paired Monte Carlo at 3 standard errors.
/// At tau = 1/2 the two bounds coincide and the equality ||f-f*||^2 =
/// 2 excess is checked as well.
BoundReport check_calibration(const SyntheticProblem& problem, const Fn& f,
                              long mc_samples);

/// Supremum bound |L o f - L o f*| <= 4 C_tau M^2 samplewise (exact) and the
/// second-moment bound E(L o f - L o f*)^2 <= 16 C_tau^2 c_tau^-1 M^2 excess
/// at 3 Monte Carlo standard errors. Requires |y| <= M and |f| <= M.
BoundReport check_variance_bound(const SyntheticProblem& problem, const Fn& f,
                                 double M, long mc_samples);

/// Randomized excess-inner-risk sandwich on discrete distributions with 2-10
/// atoms; analytic, tolerance 1e-12 relative to the quantities compared.
BoundReport check_inner_risk_sandwich(long trials, std::uint64_t seed);

/// h(p) = ((sqrt 2 - 1)/(sqrt 2 - 2^((2p-1)/(2p))))^p on (0, 1/2].
double hp_value(double p);

/// Grid check of the h(p) lemma: sup <= 1, h(1/2) = 1 exactly, and midpoint
/// convexity on consecutive grid triples.
BoundReport check_hp_lemma(int grid_points);

struct EnvelopeOptions {
  double c1 = 1.0;
  double c2 = 1.0;
  /// Envelope constant; fitted at the smallest n when absent.
  std::optional<double> fitted_constant;
  long mc_samples = 100000;
  int repetitions = 3;
  unsigned threads = 0;
};

/// Fits the schedule lambda_n = c1/n, gamma_n = c2 n^(-1/(2 alpha + d)) along
/// n_grid and compares the Monte Carlo excess clipped risk against
/// C * (lambda gamma^-d + gamma^(2 alpha) + (log 1/lambda)^(d+1) gamma^-d / n
/// + 1/n). The envelope comparison is informational; the hard assertion
/// (counted in violations) is that the excess is nonincreasing in n up to
/// twice the noise of the estimates.
BoundReport check_oracle_envelope(const SyntheticProblem& problem, double alpha,
                                  std::span<const std::size_t> n_grid,
                                  const EnvelopeOptions& options = {});

}  // namespace expreg::theory
