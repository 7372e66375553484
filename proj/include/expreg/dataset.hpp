#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace expreg {

/// n paired covariate/response samples in d dimensions, covariates stored
/// row-major. declared_bound, when present, promises |y_i| <= M for all i.
class Dataset {
 public:
  Dataset(std::vector<double> x, std::vector<double> y, std::size_t dim,
          std::optional<double> declared_bound = std::nullopt);

  std::size_t n() const { return y_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> x_row(std::size_t i) const {
    return {x_.data() + i * dim_, dim_};
  }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  std::optional<double> declared_bound() const { return declared_bound_; }

  double max_abs_y() const;

  /// Samples [start, start + count), order preserved.
  Dataset subrange(std::size_t start, std::size_t count) const;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::size_t dim_;
  std::optional<double> declared_bound_;
};

}  // namespace expreg
