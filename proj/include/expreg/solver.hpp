#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "expreg/als.hpp"
#include "expreg/dataset.hpp"
#include "expreg/kernel.hpp"

namespace expreg::solver {

struct FitOptions {
  /// Clip level for the fitted model; defaults to max_i |y_i|.
  std::optional<double> clip_level;
  int max_iterations = 200;
  /// Threads for Gram assembly; the factorization itself is single-threaded.
  unsigned threads = 0;
};

struct Diagnostics {
  int iterations = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double jitter = 0.0;
  bool width_above_unit = false;
  /// Objective after each accepted step, starting from the zero coefficient
  /// vector; nonincreasing by construction.
  std::vector<double> objective_trace;
};

/// Fitted representer coefficients over the training covariates:
/// f(x) = sum_i c_i k_gamma(x_i, x).
struct ExpectileModel {
  std::vector<double> support_points;  // row-major n x dim
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> coefficients;
  kernel::GaussianKernel kern{1.0};
  double lambda = 0.0;
  double tau = 0.5;
  std::optional<als::ClipLevel> clip_level;
  Diagnostics diagnostics;

  std::span<const double> support(std::size_t i) const {
    return {support_points.data() + i * dim, dim};
  }
};

/// Minimizes J(c) = lambda c'Gc + (1/n) sum_i L_tau(y_i, (Gc)_i) by
/// asymmetric IRLS: residual signs give weights tau / (1-tau), each step
/// solves the weighted ridge system (G + n lambda W^-1) c = y, and a step
/// that fails to decrease J is halved toward the previous iterate.
ExpectileModel fit(const Dataset& data, double tau, double lambda, double gamma,
                   const FitOptions& options = {});

double predict(const ExpectileModel& m, std::span<const double> x);

/// Predictions for `count` points stored row-major in xs.
std::vector<double> predict_many(const ExpectileModel& m,
                                 std::span<const double> xs, std::size_t count,
                                 unsigned threads = 0);

/// clip(predict(m, x), M); requires the model to carry a clip level.
double predict_clipped(const ExpectileModel& m, std::span<const double> x);

double empirical_risk(const std::function<double(std::span<const double>)>& f,
                      const Dataset& data, double tau);
double empirical_risk(const ExpectileModel& m, const Dataset& data, double tau,
                      bool clipped = false);

/// The regularized empirical objective and its gradient as functions of the
/// coefficient vector, exposed for verification.
double objective(const kernel::GramMatrix& gram, std::span<const double> y,
                 double tau, double lambda, std::span<const double> coeffs);
Eigen::VectorXd objective_gradient(const kernel::GramMatrix& gram,
                                   std::span<const double> y, double tau,
                                   double lambda,
                                   std::span<const double> coeffs);

nlohmann::json model_to_json(const ExpectileModel& m);
ExpectileModel model_from_json(const nlohmann::json& j);
void save_model(const ExpectileModel& m, const std::string& path);
ExpectileModel load_model(const std::string& path);

}  // namespace expreg::solver
