#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "expreg/dataset.hpp"
#include "expreg/solver.hpp"

namespace expreg::selection {

enum class GridMode { strict_net, practical };

/// Hyperparameter grids, stored strictly decreasing in (0, 1]. In strict_net
/// mode the lambda grid is an n^-1-net of (0,1] containing a point in
/// [1/(3n), 3/n], and the gamma grid is an n^-(1/(2 alpha + d))-net; the net
/// radii are recorded for verification.
struct GridSpec {
  GridSpec(std::vector<double> lambdas_in, std::vector<double> gammas_in,
           GridMode mode_in, double lambda_net_radius_in = 0.0,
           double gamma_net_radius_in = 0.0);

  std::vector<double> lambdas;
  std::vector<double> gammas;
  GridMode mode;
  double lambda_net_radius;
  double gamma_net_radius;

  std::size_t cells() const { return lambdas.size() * gammas.size(); }
};

/// D1 = first floor(n/2)+1 samples, D2 = the rest; order preserved.
std::pair<Dataset, Dataset> split(const Dataset& data);

/// strict_net: literal nets per the selection theorem (O(n) lambda cells).
/// practical: geometric grids, 15 lambdas spanning [1e-2/n, 1] and
/// 10 gammas spanning [0.25 n^-(1/(2 alpha + d)), 1].
GridSpec make_grids(std::size_t n, double alpha, int d, GridMode mode);

struct TVCell {
  double lambda = 0.0;
  double gamma = 0.0;
  double risk = 0.0;
  bool ok = false;
};

struct TVSVMOptions {
  unsigned threads = 0;
  /// Keep every cell's fitted model (for diagnostics / test-risk sweeps).
  bool keep_models = false;
};

struct TVSVMResult {
  double chosen_lambda = 0.0;
  double chosen_gamma = 0.0;
  solver::ExpectileModel model;
  /// Ordered by grid index: lambda descending, then gamma descending.
  std::vector<TVCell> table;
  std::size_t chosen_index = 0;
  /// Populated only when TVSVMOptions::keep_models is set.
  std::vector<std::optional<solver::ExpectileModel>> models;
};

/// Fits every (lambda, gamma) cell on D1, scores the clipped empirical risk
/// on D2, and returns the minimizer; ties break toward larger lambda, then
/// larger gamma. A cell whose fit fails is marked invalid; only a grid with
/// no valid cell at all is an error.
TVSVMResult tv_svm(const Dataset& data, double tau, const GridSpec& grids,
                   const TVSVMOptions& options = {});

}  // namespace expreg::selection
