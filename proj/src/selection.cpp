#include "expreg/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "expreg/errors.hpp"
#include "expreg/parallel.hpp"

namespace expreg::selection {

GridSpec::GridSpec(std::vector<double> lambdas_in, std::vector<double> gammas_in,
                   GridMode mode_in, double lambda_net_radius_in,
                   double gamma_net_radius_in)
    : lambdas(std::move(lambdas_in)),
      gammas(std::move(gammas_in)),
      mode(mode_in),
      lambda_net_radius(lambda_net_radius_in),
      gamma_net_radius(gamma_net_radius_in) {
  auto validate = [](const std::vector<double>& values, const char* name) {
    if (values.empty()) {
      throw std::invalid_argument(std::string(name) + " grid is empty");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(std::isfinite(values[i]) && values[i] > 0.0 && values[i] <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " grid leaves (0, 1]");
      }
      if (i > 0 && !(values[i] < values[i - 1])) {
        throw std::invalid_argument(std::string(name) +
                                    " grid must be strictly decreasing");
      }
    }
  };
  validate(lambdas, "lambda");
  validate(gammas, "gamma");
}

std::pair<Dataset, Dataset> split(const Dataset& data) {
  const std::size_t n = data.n();
  if (n < 4) throw std::invalid_argument("split requires n >= 4");
  const std::size_t m = n / 2 + 1;
  return {data.subrange(0, m), data.subrange(m, n - m)};
}

namespace {

// Net of (0, 1] with radius delta: even multiples of delta capped at 1, plus
// the point delta itself to cover the left edge.
std::vector<double> net_of_unit_interval(double delta) {
  std::vector<double> pts;
  for (double v = 2.0 * delta; v < 1.0; v += 2.0 * delta) pts.push_back(v);
  pts.push_back(1.0);
  pts.push_back(delta);
  std::sort(pts.begin(), pts.end(), std::greater<double>());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

std::vector<double> geometric_grid(double hi, double lo, std::size_t count) {
  std::vector<double> pts(count);
  const double ratio = std::pow(lo / hi, 1.0 / static_cast<double>(count - 1));
  double v = hi;
  for (std::size_t i = 0; i < count; ++i) {
    pts[i] = v;
    v *= ratio;
  }
  pts.back() = lo;
  return pts;
}

}  // namespace

GridSpec make_grids(std::size_t n, double alpha, int d, GridMode mode) {
  if (n < 4) throw std::invalid_argument("grids require n >= 4");
  if (!(std::isfinite(alpha) && alpha >= 1.0)) {
    throw std::invalid_argument("alpha must be >= 1");
  }
  if (d < 1) throw std::invalid_argument("dimension must be positive");

  const double nd = static_cast<double>(n);
  const double gamma_delta = std::pow(nd, -1.0 / (2.0 * alpha + d));

  if (mode == GridMode::strict_net) {
    const double lambda_delta = 1.0 / nd;
    return GridSpec(net_of_unit_interval(lambda_delta),
                    net_of_unit_interval(gamma_delta), mode, lambda_delta,
                    gamma_delta);
  }
  return GridSpec(geometric_grid(1.0, 1e-2 / nd, 15),
                  geometric_grid(1.0, 0.25 * gamma_delta, 10), mode);
}

TVSVMResult tv_svm(const Dataset& data, double tau, const GridSpec& grids,
                   const TVSVMOptions& options) {
  if (!(std::isfinite(tau) && tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("tau must lie in (0, 1)");
  }
  auto [d1, d2] = split(data);

  const double bound =
      data.declared_bound() ? *data.declared_bound() : data.max_abs_y();
  const bool clip_active = bound > 0.0;

  const std::size_t n_cells = grids.cells();
  std::vector<TVCell> table(n_cells);
  std::vector<std::optional<solver::ExpectileModel>> models(n_cells);

  parallel_for(n_cells, options.threads, [&](std::size_t idx) {
    const double lambda = grids.lambdas[idx / grids.gammas.size()];
    const double gamma = grids.gammas[idx % grids.gammas.size()];
    TVCell cell;
    cell.lambda = lambda;
    cell.gamma = gamma;
    try {
      solver::FitOptions fit_options;
      fit_options.threads = 1;
      if (clip_active) fit_options.clip_level = bound;
      solver::ExpectileModel m = solver::fit(d1, tau, lambda, gamma, fit_options);
      cell.risk = solver::empirical_risk(m, d2, tau, clip_active);
      cell.ok = true;
      models[idx] = std::move(m);
    } catch (const numerical_error&) {
      cell.ok = false;
    }
    table[idx] = cell;
  });

  // Deterministic reduction in grid order; strict improvement keeps the
  // largest lambda (then gamma) among exact ties.
  std::size_t best = n_cells;
  for (std::size_t idx = 0; idx < n_cells; ++idx) {
    if (!table[idx].ok) continue;
    if (best == n_cells || table[idx].risk < table[best].risk) best = idx;
  }
  if (best == n_cells) {
    throw numerical_error("every grid cell failed to fit");
  }

  TVSVMResult result;
  result.chosen_lambda = table[best].lambda;
  result.chosen_gamma = table[best].gamma;
  result.model = *models[best];
  result.table = std::move(table);
  result.chosen_index = best;
  if (options.keep_models) result.models = std::move(models);
  return result;
}

}  // namespace expreg::selection
