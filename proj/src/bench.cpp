#include "expreg/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "expreg/errors.hpp"
#include "expreg/parallel.hpp"
#include "expreg/rng.hpp"

namespace expreg::bench {

namespace {

constexpr std::uint64_t kProblemTag = 0x5052;  // "PR"
constexpr std::uint64_t kDataTag = 0x4441;     // "DA"
constexpr std::uint64_t kMcTag = 0x4d43;       // "MC"
constexpr std::uint64_t kRateTag = 0x5254;     // "RT"

struct CellResult {
  bool ok = false;
  double excess = 0.0;
  double mc_se = 0.0;
};

struct Welford {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

double fit_loglog_slope(const std::vector<RateRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const RateRow& r : rows) {
    const double lx = std::log(static_cast<double>(r.n));
    const double ly = std::log(r.mean_excess);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double count = static_cast<double>(rows.size());
  return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

RateExperiment run_schedule(RateExperiment exp, double tau, unsigned threads,
                            const ModelAudit& audit,
                            const TailSchedule* schedule) {
  if (exp.n_grid.empty()) throw std::invalid_argument("empty n grid");
  if (exp.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  for (std::size_t i = 1; i < exp.n_grid.size(); ++i) {
    if (!(exp.n_grid[i] > exp.n_grid[i - 1])) {
      throw std::invalid_argument("n grid must be strictly increasing");
    }
  }
  const als::ALSConfig cfg(tau);
  const std::size_t reps = static_cast<std::size_t>(exp.repetitions);
  const std::size_t cells = exp.n_grid.size() * reps;
  std::vector<CellResult> results(cells);

  parallel_for(cells, threads, [&](std::size_t idx) {
    const std::size_t gi = idx / reps;
    const std::size_t rep = idx % reps;
    const std::size_t n = exp.n_grid[gi];
    const double nd = static_cast<double>(n);
    const std::uint64_t cell_seed = mix64(mix64(mix64(exp.seed, kRateTag), n), rep);

    CellResult cell;
    try {
      SynthResult sr = synth(exp.kind, exp.d, n, cell_seed, tau, exp.noise_sigma);
      const double lambda = exp.c1 / nd;
      const double gamma =
          exp.c2 * std::pow(nd, -1.0 / (2.0 * exp.alpha + exp.d));
      solver::FitOptions fit_options;
      fit_options.threads = 1;
      solver::ExpectileModel model =
          solver::fit(sr.data, tau, lambda, gamma, fit_options);
      if (schedule != nullptr) {
        model.clip_level = als::ClipLevel(clip_schedule(*schedule, nd));
      }
      if (audit) audit(model, sr.data);

      Rng mc = Rng::substream(cell_seed, {kMcTag});
      std::vector<double> x(static_cast<std::size_t>(exp.d));
      Welford acc;
      const bool clipped = model.clip_level.has_value();
      for (long s = 0; s < exp.mc_samples; ++s) {
        sr.problem.sample_x(mc, x);
        const double y = sr.problem.sample_y(x, mc);
        const double pred =
            clipped ? solver::predict_clipped(model, x) : solver::predict(model, x);
        acc.add(als::als_loss(cfg, y, pred) -
                als::als_loss(cfg, y, sr.problem.target(x)));
      }
      cell.excess = acc.mean;
      cell.mc_se = acc.standard_error();
      cell.ok = true;
    } catch (const numerical_error&) {
      cell.ok = false;
    }
    results[idx] = cell;
  });

  exp.rows.clear();
  exp.rows.reserve(exp.n_grid.size());
  for (std::size_t gi = 0; gi < exp.n_grid.size(); ++gi) {
    Welford across;
    double mc_var = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const CellResult& cell = results[gi * reps + rep];
      if (!cell.ok) continue;
      across.add(cell.excess);
      mc_var += cell.mc_se * cell.mc_se;
    }
    if (across.n == 0) {
      throw numerical_error("every repetition failed at n = " +
                            std::to_string(exp.n_grid[gi]));
    }
    RateRow row;
    row.n = exp.n_grid[gi];
    row.mean_excess = across.mean;
    row.std_excess = std::sqrt(across.variance());
    row.mc_se = std::sqrt(mc_var) / static_cast<double>(across.n);
    row.clip_level =
        schedule != nullptr
            ? clip_schedule(*schedule, static_cast<double>(exp.n_grid[gi]))
            : 0.0;
    exp.rows.push_back(row);
  }

  exp.slope.reset();
  if (exp.rows.size() >= 3) {
    bool positive = true;
    for (const RateRow& r : exp.rows) positive = positive && r.mean_excess > 0.0;
    if (positive) exp.slope = fit_loglog_slope(exp.rows);
  }
  exp.completed = true;
  return exp;
}

}  // namespace

SynthResult synth(theory::ProblemKind kind, int d, std::size_t n,
                  std::uint64_t seed, double tau, double noise_sigma) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  theory::SyntheticProblem problem =
      theory::make_problem(kind, tau, d, mix64(seed, kProblemTag), noise_sigma);

  Rng rng = Rng::substream(seed, {kDataTag});
  std::vector<double> xs(n * static_cast<std::size_t>(d));
  std::vector<double> ys(n);
  std::vector<double> x(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    problem.sample_x(rng, x);
    std::copy(x.begin(), x.end(), xs.begin() + i * static_cast<std::size_t>(d));
    ys[i] = problem.sample_y(x, rng);
  }
  std::optional<double> bound;
  if (std::isfinite(problem.response_bound)) bound = problem.response_bound;
  return {Dataset(std::move(xs), std::move(ys), static_cast<std::size_t>(d), bound),
          std::move(problem)};
}

TailSchedule::TailSchedule(double c_in, double l_in, double rho_hat_in)
    : c(c_in), l(l_in), rho_hat(rho_hat_in) {
  if (!(std::isfinite(c) && c >= 1.0)) {
    throw std::invalid_argument("tail constant c must be >= 1");
  }
  if (!(std::isfinite(l) && l > 0.0)) {
    throw std::invalid_argument("tail exponent l must be positive");
  }
  if (!(std::isfinite(rho_hat) && rho_hat >= 1.0)) {
    throw std::invalid_argument("rho_hat must be >= 1");
  }
}

double clip_schedule(const TailSchedule& schedule, double n) {
  if (!(n >= 3.0)) throw std::invalid_argument("clip schedule requires n >= 3");
  return 2.0 * schedule.c * std::pow(schedule.rho_hat + std::log(n), schedule.l);
}

RateExperiment measure_rate(RateExperiment experiment, double tau,
                            unsigned threads, const ModelAudit& audit) {
  return run_schedule(std::move(experiment), tau, threads, audit, nullptr);
}

RateExperiment unbounded_rate_run(RateExperiment experiment,
                                  const TailSchedule& schedule, double tau,
                                  unsigned threads, const ModelAudit& audit) {
  return run_schedule(std::move(experiment), tau, threads, audit, &schedule);
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_rate_csv(const RateExperiment& experiment, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << "n,mean_excess,std_excess\n";
  for (const RateRow& r : experiment.rows) {
    out << r.n << ',' << format_double(r.mean_excess) << ','
        << format_double(r.std_excess) << '\n';
  }
  if (!out) throw io_error("write to " + path + " failed");
}

nlohmann::json rate_summary_json(const RateExperiment& experiment) {
  nlohmann::json j;
  j["kind"] = theory::to_string(experiment.kind);
  j["noise_sigma"] = experiment.noise_sigma;
  j["c1"] = experiment.c1;
  j["c2"] = experiment.c2;
  j["alpha"] = experiment.alpha;
  j["d"] = experiment.d;
  j["repetitions"] = experiment.repetitions;
  j["seed"] = experiment.seed;
  j["mc_samples"] = experiment.mc_samples;
  j["completed"] = experiment.completed;
  if (experiment.slope) {
    j["slope"] = *experiment.slope;
  } else {
    j["slope"] = nullptr;
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const RateRow& r : experiment.rows) {
    rows.push_back({{"n", r.n},
                    {"mean_excess", r.mean_excess},
                    {"std_excess", r.std_excess},
                    {"mc_se", r.mc_se},
                    {"clip_level", r.clip_level}});
  }
  j["rows"] = rows;
  return j;
}

}  // namespace expreg::bench
