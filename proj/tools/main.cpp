#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "expreg/bench.hpp"
#include "expreg/errors.hpp"
#include "expreg/io.hpp"
#include "expreg/kernel.hpp"
#include "expreg/selection.hpp"
#include "expreg/solver.hpp"
#include "expreg/theory.hpp"

namespace {

// Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical/domain failure.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct Flags {
  std::string data;
  std::string model;
  std::string out;
  std::string table;
  std::string summary;
  std::string dist;
  std::string spectrum_out;
  std::string kind = "noiseless-sine";
  std::string mode = "practical";
  double tau = 0.5;
  double lambda = 1e-3;
  double gamma = 0.5;
  double alpha = 3.0;
  double noise_sigma = 0.2;
  double c1 = 1.0;
  double c2 = 1.0;
  double tail_c = 3.0;
  double tail_l = 0.5;
  double tail_rho = 1.0;
  std::optional<double> clip;
  std::vector<std::size_t> n_grid = {128, 256, 512, 1024, 2048};
  int d = 1;
  int reps = 5;
  long mc = 100000;
  long trials = 10000;
  int hp_grid = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool unbounded = false;
  bool skip_envelope = false;
};

int usage_error(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  std::cerr << "run with --help for usage\n";
  return kExitUsage;
}

bool check_tau(double tau) { return tau > 0.0 && tau < 1.0; }

int cmd_train(const Flags& f) {
  if (!check_tau(f.tau)) return usage_error("--tau must lie in (0, 1)");
  if (!(f.lambda > 0.0)) return usage_error("--lambda must be positive");
  if (!(f.gamma > 0.0)) return usage_error("--gamma must be positive");
  const expreg::Dataset data = expreg::io::read_dataset_csv(f.data);
  expreg::solver::FitOptions options;
  options.threads = f.threads;
  options.clip_level = f.clip;
  const auto model = expreg::solver::fit(data, f.tau, f.lambda, f.gamma, options);
  const std::string out = f.out.empty() ? "model.json" : f.out;
  expreg::solver::save_model(model, out);
  std::cout << "objective=" << model.diagnostics.objective
            << " iterations=" << model.diagnostics.iterations
            << " gradient_norm=" << model.diagnostics.gradient_norm << "\n";
  if (model.diagnostics.width_above_unit) {
    std::cout << "warning: kernel width above 1; capacity bounds do not apply\n";
  }
  std::cout << "model written to " << out << "\n";
  return kExitOk;
}

int cmd_predict(const Flags& f) {
  const auto model = expreg::solver::load_model(f.model);
  const auto cov = expreg::io::read_covariates_csv(f.data);
  if (cov.n > 0 && cov.dim != model.dim) {
    throw std::invalid_argument("covariate dimension does not match the model");
  }
  std::vector<double> preds(cov.n);
  for (std::size_t i = 0; i < cov.n; ++i) {
    std::span<const double> x{cov.x.data() + i * cov.dim, cov.dim};
    preds[i] = model.clip_level ? expreg::solver::predict_clipped(model, x)
                                : expreg::solver::predict(model, x);
  }
  const std::string out = f.out.empty() ? "predictions.csv" : f.out;
  expreg::io::write_predictions_csv(preds, out);
  std::cout << preds.size() << " predictions written to " << out << "\n";
  return kExitOk;
}

int cmd_tvsvm(const Flags& f) {
  if (!check_tau(f.tau)) return usage_error("--tau must lie in (0, 1)");
  if (!(f.alpha >= 1.0)) return usage_error("--alpha must be >= 1");
  const expreg::Dataset data = expreg::io::read_dataset_csv(f.data);
  if (data.n() < 4) return usage_error("tvsvm requires at least 4 samples");
  expreg::selection::GridMode mode;
  if (f.mode == "practical") {
    mode = expreg::selection::GridMode::practical;
  } else if (f.mode == "strict-net") {
    mode = expreg::selection::GridMode::strict_net;
  } else {
    return usage_error("--mode must be practical or strict-net");
  }
  const auto grids = expreg::selection::make_grids(
      data.n(), f.alpha, static_cast<int>(data.dim()), mode);
  expreg::selection::TVSVMOptions options;
  options.threads = f.threads;
  const auto result = expreg::selection::tv_svm(data, f.tau, grids, options);
  std::cout << "chosen lambda=" << result.chosen_lambda
            << " gamma=" << result.chosen_gamma
            << " validation_risk=" << result.table[result.chosen_index].risk
            << "\n";
  const std::string out = f.out.empty() ? "model.json" : f.out;
  expreg::solver::save_model(result.model, out);
  std::cout << "model written to " << out << "\n";
  if (!f.table.empty()) {
    expreg::io::write_validation_table_csv(result.table, f.table);
    std::cout << "validation table written to " << f.table << "\n";
  }
  return kExitOk;
}

int cmd_rates(const Flags& f) {
  if (!check_tau(f.tau)) return usage_error("--tau must lie in (0, 1)");
  if (!(f.alpha >= 1.0)) return usage_error("--alpha must be >= 1");
  if (f.reps < 1) return usage_error("--reps must be >= 1");
  expreg::bench::RateExperiment exp;
  exp.kind = expreg::theory::problem_kind_from_string(f.kind);
  exp.noise_sigma = f.noise_sigma;
  exp.c1 = f.c1;
  exp.c2 = f.c2;
  exp.alpha = f.alpha;
  exp.d = f.d;
  exp.n_grid = f.n_grid;
  exp.repetitions = f.reps;
  exp.seed = f.seed;
  exp.mc_samples = f.mc;

  expreg::bench::RateExperiment done;
  if (f.unbounded) {
    const expreg::bench::TailSchedule schedule(f.tail_c, f.tail_l, f.tail_rho);
    done = expreg::bench::unbounded_rate_run(exp, schedule, f.tau, f.threads);
  } else {
    done = expreg::bench::measure_rate(exp, f.tau, f.threads);
  }

  const std::string out = f.out.empty() ? "rates.csv" : f.out;
  expreg::bench::write_rate_csv(done, out);
  std::cout << "rate table written to " << out << "\n";
  const std::string summary = f.summary.empty() ? "rates.json" : f.summary;
  {
    std::ofstream js(summary);
    if (!js) throw expreg::io_error("cannot open " + summary + " for writing");
    js << expreg::bench::rate_summary_json(done).dump(2) << "\n";
  }
  std::cout << "summary written to " << summary << "\n";
  if (done.slope) {
    std::cout << "fitted slope=" << *done.slope << "\n";
  } else {
    std::cout << "fitted slope undefined (need >= 3 grid points)\n";
  }
  return kExitOk;
}

void print_report(const expreg::theory::BoundReport& report, bool& all_passed,
                  nlohmann::json& collected) {
  std::cout << (report.passed() ? "PASS " : "FAIL ") << report.check << ": "
            << report.trials << " checks, " << report.violations
            << " violations, max slack " << report.max_slack << "\n";
  all_passed = all_passed && report.passed();
  collected.push_back(report.to_json());
}

int cmd_verify(const Flags& f) {
  if (f.trials < 1) return usage_error("--trials must be >= 1");
  if (f.hp_grid < 100) return usage_error("--hp-grid must be >= 100");
  if (f.mc < 1000) return usage_error("--mc must be >= 1000");

  bool all_passed = true;
  nlohmann::json collected = nlohmann::json::array();

  print_report(expreg::theory::check_inner_risk_sandwich(f.trials, f.seed),
               all_passed, collected);
  print_report(expreg::theory::check_hp_lemma(f.hp_grid), all_passed, collected);

  for (double tau : {0.1, 0.5, 0.9}) {
    const auto problem = expreg::theory::make_problem(
        expreg::theory::ProblemKind::gauss_sine, tau, 1,
        expreg::mix64(f.seed, 11), 0.3);
    auto sr = expreg::bench::synth(expreg::theory::ProblemKind::gauss_sine, 1,
                                   256, expreg::mix64(f.seed, 12), tau, 0.3);
    expreg::solver::FitOptions fopt;
    fopt.threads = f.threads;
    const auto model = expreg::solver::fit(sr.data, tau, 1.0 / 256.0, 0.5, fopt);
    auto fitted = [&model](std::span<const double> x) {
      return expreg::solver::predict(model, x);
    };
    auto report = expreg::theory::check_calibration(problem, fitted, f.mc);
    report.check = "calibration tau=" + std::to_string(tau);
    print_report(report, all_passed, collected);
  }

  {
    const double tau = 0.9;
    const auto problem = expreg::theory::make_problem(
        expreg::theory::ProblemKind::twopoint_sine, tau, 1,
        expreg::mix64(f.seed, 13), 0.4);
    auto sr = expreg::bench::synth(expreg::theory::ProblemKind::twopoint_sine, 1,
                                   256, expreg::mix64(f.seed, 14), tau, 0.4);
    expreg::solver::FitOptions fopt;
    fopt.threads = f.threads;
    const auto model = expreg::solver::fit(sr.data, tau, 1.0 / 256.0, 0.5, fopt);
    auto clipped = [&model](std::span<const double> x) {
      return expreg::solver::predict_clipped(model, x);
    };
    auto report = expreg::theory::check_variance_bound(problem, clipped, 1.0, f.mc);
    print_report(report, all_passed, collected);
  }

  // Closed-form maximizer of eps^p (log 1/eps)^(d+1) against a grid search.
  {
    expreg::theory::BoundReport report;
    report.check = "entropy-maximizer";
    for (double p : {0.2, 0.5, 0.8}) {
      for (int d : {1, 2, 3}) {
        const double star = expreg::kernel::entropy_epsilon_star(p, d);
        const double lo = std::log(star) * 2.0;
        const double hi = std::log(0.5) - 1e-12;
        const int grid = 200000;
        double best_log_eps = lo;
        double best = -1.0;
        for (int k = 0; k <= grid; ++k) {
          const double log_eps = lo + (hi - lo) * k / grid;
          const double value =
              std::exp(p * log_eps) * std::pow(-log_eps, double(d + 1));
          if (value > best) {
            best = value;
            best_log_eps = log_eps;
          }
        }
        const double resolution = 2.0 * (hi - lo) / grid;
        expreg::theory::CheckDetail detail;
        detail.name = "p=" + std::to_string(p) + " d=" + std::to_string(d);
        detail.lhs = std::abs(best_log_eps - std::log(star));
        detail.rhs = resolution;
        detail.slack = detail.lhs - detail.rhs;
        detail.pass = detail.slack <= 0.0;
        ++report.trials;
        if (!detail.pass) ++report.violations;
        report.max_slack = std::max(report.max_slack, detail.slack);
        report.details.push_back(detail);
      }
    }
    print_report(report, all_passed, collected);
  }

  if (!f.skip_envelope) {
    const auto problem = expreg::theory::make_problem(
        expreg::theory::ProblemKind::noiseless_sine, 0.5, 1,
        expreg::mix64(f.seed, 15), 0.2);
    const std::vector<std::size_t> grid = {64, 128, 256, 512};
    expreg::theory::EnvelopeOptions options;
    options.mc_samples = std::min<long>(f.mc, 20000);
    options.repetitions = 2;
    options.threads = f.threads;
    print_report(expreg::theory::check_oracle_envelope(problem, 3.0, grid, options),
                 all_passed, collected);
  }

  if (!f.dist.empty()) {
    const auto q = expreg::io::read_distribution_csv(f.dist);
    expreg::theory::BoundReport report;
    report.check = "distribution-sandwich";
    for (int k = 1; k <= 99; ++k) {
      const expreg::als::ALSConfig cfg(k / 100.0);
      const double t_star = expreg::als::expectile(q, cfg);
      for (double t : {q.min_value(), q.mean(), q.max_value(),
                       t_star + 0.5 * (1.0 + q.span())}) {
        const double excess = expreg::als::excess_inner_risk(q, cfg, t);
        const double gap2 = (t - t_star) * (t - t_star);
        const double lo = cfg.c_tau() * gap2;
        const double hi = cfg.C_tau() * gap2;
        const double tol = 1e-12 * (1.0 + hi + excess);
        const double slack = std::max(lo - excess, excess - hi);
        ++report.trials;
        report.max_slack = std::max(report.max_slack, slack);
        if (slack > tol) ++report.violations;
      }
    }
    print_report(report, all_passed, collected);
    const expreg::als::ALSConfig cfg(f.tau);
    std::cout << "expectile(tau=" << f.tau
              << ") = " << expreg::als::expectile(q, cfg) << "\n";
  }

  if (!f.spectrum_out.empty()) {
    if (f.data.empty()) return usage_error("--spectrum-out requires --data");
    if (!(f.gamma > 0.0)) return usage_error("--gamma must be positive");
    const expreg::Dataset data = expreg::io::read_dataset_csv(f.data);
    const auto g = expreg::kernel::gram(expreg::kernel::GaussianKernel(f.gamma),
                                        data.x(), data.n(), data.dim(), f.threads);
    const auto eigs = expreg::kernel::empirical_eigendecay(g);
    expreg::io::write_eigenvalues_csv(eigs, f.spectrum_out);
    std::cout << "spectrum written to " << f.spectrum_out;
    if (eigs.size() >= 8) {
      std::cout << " (decay exponent "
                << expreg::kernel::eigendecay_exponent(eigs) << ")";
    }
    std::cout << "\n";
  }

  if (!f.out.empty()) {
    std::ofstream js(f.out);
    if (!js) throw expreg::io_error("cannot open " + f.out + " for writing");
    js << collected.dump(2) << "\n";
    std::cout << "report written to " << f.out << "\n";
  }

  std::cout << (all_passed ? "all checks passed" : "some checks FAILED") << "\n";
  return all_passed ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel expectile regression: training, model selection, "
               "learning-rate experiments, and bound verification"};
  app.require_subcommand(1);

  Flags f;

  auto add_shared = [&f](CLI::App* cmd) {
    cmd->add_option("--tau", f.tau, "asymmetry level in (0, 1)");
    cmd->add_option("--seed", f.seed, "master seed for all randomness");
    cmd->add_option("--threads", f.threads,
                    "worker threads (0 = hardware concurrency)");
    cmd->add_option("--out", f.out, "main output path");
  };

  CLI::App* train = app.add_subcommand("train", "fit a model on a dataset CSV");
  train->add_option("--data", f.data, "dataset CSV (x1,...,xd,y)")->required();
  train->add_option("--lambda", f.lambda, "regularization parameter");
  train->add_option("--gamma", f.gamma, "kernel width");
  double clip_value = 0.0;
  CLI::Option* clip_opt =
      train->add_option("--clip", clip_value, "clip level (default max |y|)");
  add_shared(train);

  CLI::App* predict = app.add_subcommand("predict", "evaluate a saved model");
  predict->add_option("--model", f.model, "model JSON")->required();
  predict->add_option("--data", f.data, "covariate CSV")->required();
  add_shared(predict);

  CLI::App* tvsvm = app.add_subcommand("tvsvm", "training-validation grid selection");
  tvsvm->add_option("--data", f.data, "dataset CSV")->required();
  tvsvm->add_option("--alpha", f.alpha, "smoothness input for the gamma grid");
  tvsvm->add_option("--mode", f.mode, "grid mode: practical or strict-net");
  tvsvm->add_option("--table", f.table, "validation table CSV output");
  add_shared(tvsvm);

  CLI::App* rates = app.add_subcommand("rates", "learning-rate experiment");
  rates->add_option("--kind", f.kind,
                    "problem kind: noiseless-sine, gauss-noise, gauss-const, "
                    "twopoint-sine");
  rates->add_option("--d", f.d, "covariate dimension");
  rates->add_option("--alpha", f.alpha, "smoothness input for the schedule");
  rates->add_option("--c1", f.c1, "lambda schedule constant");
  rates->add_option("--c2", f.c2, "gamma schedule constant");
  rates->add_option("--noise-sigma", f.noise_sigma, "noise scale");
  rates->add_option("--n-grid", f.n_grid, "sample sizes");
  rates->add_option("--reps", f.reps, "repetitions per n");
  rates->add_option("--mc", f.mc, "Monte Carlo samples per estimate");
  rates->add_flag("--unbounded", f.unbounded,
                  "train unclipped, clip at M_n = 2c(rho+ln n)^l after training");
  rates->add_option("--tail-c", f.tail_c, "tail constant c >= 1");
  rates->add_option("--tail-l", f.tail_l, "tail exponent l > 0");
  rates->add_option("--tail-rho", f.tail_rho, "rho_hat >= 1");
  rates->add_option("--summary", f.summary, "JSON summary path");
  add_shared(rates);

  CLI::App* verify = app.add_subcommand("verify", "run the bound checks");
  verify->add_option("--trials", f.trials, "sandwich trials");
  verify->add_option("--hp-grid", f.hp_grid, "h(p) grid points");
  verify->add_option("--mc", f.mc, "Monte Carlo samples per check");
  verify->add_option("--dist", f.dist, "distribution CSV (value,mass)");
  verify->add_option("--data", f.data, "dataset CSV for the spectrum export");
  verify->add_option("--gamma", f.gamma, "kernel width for the spectrum export");
  verify->add_option("--spectrum-out", f.spectrum_out, "eigenvalue CSV output");
  verify->add_flag("--skip-envelope", f.skip_envelope,
                   "skip the oracle-envelope run");
  add_shared(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (clip_opt->count() > 0) f.clip = clip_value;

  try {
    if (train->parsed()) return cmd_train(f);
    if (predict->parsed()) return cmd_predict(f);
    if (tvsvm->parsed()) return cmd_tvsvm(f);
    if (rates->parsed()) return cmd_rates(f);
    if (verify->parsed()) return cmd_verify(f);
  } catch (const expreg::io_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const expreg::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
