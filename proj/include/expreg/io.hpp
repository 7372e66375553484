#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "expreg/als.hpp"
#include "expreg/dataset.hpp"
#include "expreg/selection.hpp"

namespace expreg::io {

/// Dataset CSV: header `x1,...,xd,y`, '.' decimal separator, one sample per
/// row. The reader infers d from the header (last column must be `y`).
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

/// Covariate-only CSV: header `x1,...,xd`; a trailing `y` column is ignored.
/// May contain zero rows.
struct Covariates {
  std::vector<double> x;  // row-major
  std::size_t n = 0;
  std::size_t dim = 0;
};
Covariates read_covariates_csv(const std::string& path);

/// Discrete distribution CSV: header `value,mass`.
als::DiscreteDistribution read_distribution_csv(const std::string& path);
void write_distribution_csv(const als::DiscreteDistribution& q,
                            const std::string& path);

/// Eigenvalue sequence CSV: header `i,lambda`, 1-based indices.
void write_eigenvalues_csv(std::span<const double> eigenvalues,
                           const std::string& path);

/// Validation table CSV: header `lambda,gamma,risk`, grid order preserved.
void write_validation_table_csv(const std::vector<selection::TVCell>& table,
                                const std::string& path);

/// Prediction CSV: single `prediction` column.
void write_predictions_csv(std::span<const double> predictions,
                           const std::string& path);

}  // namespace expreg::io
