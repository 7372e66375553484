#include "expreg/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace expreg {

Dataset::Dataset(std::vector<double> x, std::vector<double> y, std::size_t dim,
                 std::optional<double> declared_bound)
    : x_(std::move(x)), y_(std::move(y)), dim_(dim), declared_bound_(declared_bound) {
  if (y_.empty()) throw std::invalid_argument("dataset must contain at least one sample");
  if (dim_ == 0) throw std::invalid_argument("dataset dimension must be positive");
  if (x_.size() != y_.size() * dim_) {
    throw std::invalid_argument("covariate storage does not match n * dim");
  }
  for (double v : x_) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite covariate");
  }
  for (double v : y_) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite response");
  }
  if (declared_bound_) {
    if (!(std::isfinite(*declared_bound_) && *declared_bound_ > 0.0)) {
      throw std::invalid_argument("declared bound must be positive and finite");
    }
    for (double v : y_) {
      if (std::abs(v) > *declared_bound_) {
        throw std::invalid_argument("response exceeds the declared bound");
      }
    }
  }
}

double Dataset::max_abs_y() const {
  double m = 0.0;
  for (double v : y_) m = std::max(m, std::abs(v));
  return m;
}

Dataset Dataset::subrange(std::size_t start, std::size_t count) const {
  if (start + count > n() || count == 0) {
    throw std::invalid_argument("subrange outside dataset");
  }
  std::vector<double> xs(x_.begin() + start * dim_, x_.begin() + (start + count) * dim_);
  std::vector<double> ys(y_.begin() + start, y_.begin() + start + count);
  return Dataset(std::move(xs), std::move(ys), dim_, declared_bound_);
}

}  // namespace expreg
