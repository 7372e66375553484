#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "expreg/dataset.hpp"
#include "expreg/solver.hpp"
#include "expreg/theory.hpp"

namespace expreg::bench {

struct RateRow {
  std::size_t n = 0;
  double mean_excess = 0.0;
  double std_excess = 0.0;  // across repetitions, 0 for a single repetition
  double mc_se = 0.0;       // combined Monte Carlo standard error of the mean
  double clip_level = 0.0;  // M_n for unbounded runs, 0 otherwise
};

/// Learning-rate experiment along the schedule lambda_n = c1/n,
/// gamma_n = c2 n^(-1/(2 alpha + d)). The completed experiment carries the
/// per-n excess-risk table and, with at least three grid points, the fitted
/// log-log slope.
struct RateExperiment {
  theory::ProblemKind kind = theory::ProblemKind::noiseless_sine;
  double noise_sigma = 0.2;
  double c1 = 1.0;
  double c2 = 1.0;
  double alpha = 3.0;
  int d = 1;
  std::vector<std::size_t> n_grid = {128, 256, 512, 1024, 2048};
  int repetitions = 5;
  std::uint64_t seed = 0;
  long mc_samples = 100000;

  // Filled in by measure_rate / unbounded_rate_run.
  bool completed = false;
  std::vector<RateRow> rows;
  std::optional<double> slope;
};

struct SynthResult {
  Dataset data;
  theory::SyntheticProblem problem;
};

/// Reproducible draw of n samples from the named problem; the problem (and
/// with it the f* evaluator) rides along with the data.
SynthResult synth(theory::ProblemKind kind, int d, std::size_t n,
                  std::uint64_t seed, double tau = 0.5, double noise_sigma = 0.2);

/// Tail constants of the unbounded-noise condition
/// P(|y| <= c rho^l) >= 1 - e^-rho.
struct TailSchedule {
  TailSchedule(double c_in, double l_in, double rho_hat_in);
  double c;
  double l;
  double rho_hat;
};

/// M_n = 2c (rho_hat + ln n)^l for n >= 3.
double clip_schedule(const TailSchedule& schedule, double n);

/// Optional per-model audit callback, invoked for every fitted cell.
using ModelAudit =
    std::function<void(const solver::ExpectileModel&, const Dataset&)>;

/// Runs the schedule: for each (n, repetition) draws data, fits, estimates
/// the excess clipped risk against f* on fresh Monte Carlo points, and fits
/// the slope of log(mean excess) against log n.
RateExperiment measure_rate(RateExperiment experiment, double tau,
                            unsigned threads = 0, const ModelAudit& audit = {});

/// Same as measure_rate, but trains on unclipped responses and clips the
/// decision function at M_n = clip_schedule(n) after training.
RateExperiment unbounded_rate_run(RateExperiment experiment,
                                  const TailSchedule& schedule, double tau,
                                  unsigned threads = 0,
                                  const ModelAudit& audit = {});

void write_rate_csv(const RateExperiment& experiment, const std::string& path);
nlohmann::json rate_summary_json(const RateExperiment& experiment);

}  // namespace expreg::bench
