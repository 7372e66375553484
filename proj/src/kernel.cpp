#include "expreg/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "expreg/errors.hpp"
#include "expreg/parallel.hpp"

namespace expreg::kernel {

GaussianKernel::GaussianKernel(double gamma_in) : gamma(gamma_in) {
  if (!(std::isfinite(gamma) && gamma > 0.0)) {
    throw std::invalid_argument("kernel width must be positive and finite");
  }
}

double eval(const GaussianKernel& k, std::span<const double> x,
            std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("kernel arguments have different dimensions");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sq += d * d;
  }
  const double v = std::exp(-sq / (k.gamma * k.gamma));
  // Subnormal tails are irrelevant next to the unit diagonal.
  return v < 1e-300 ? 0.0 : v;
}

GramMatrix gram(const GaussianKernel& k, std::span<const double> points,
                std::size_t n, std::size_t dim, unsigned threads) {
  if (n == 0) throw std::invalid_argument("gram of an empty point set");
  if (dim == 0 || points.size() != n * dim) {
    throw std::invalid_argument("point storage does not match n * dim");
  }
  for (double v : points) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite coordinate");
  }

  GramMatrix g;
  g.entries.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  g.points.assign(points.begin(), points.end());
  g.n = n;
  g.dim = dim;

  const double inv_g2 = 1.0 / (k.gamma * k.gamma);
  parallel_for(n, threads, [&](std::size_t i) {
    const double* xi = points.data() + i * dim;
    g.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = points.data() + j * dim;
      double sq = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = xi[c] - xj[c];
        sq += d * d;
      }
      double v = std::exp(-sq * inv_g2);
      if (v < 1e-300) v = 0.0;
      g.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      g.entries(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  });
  return g;
}

std::vector<double> empirical_eigendecay(const GramMatrix& g) {
  if (g.n == 0) throw std::invalid_argument("empty Gram matrix");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.compute(g.entries / static_cast<double>(g.n), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw numerical_error("eigendecomposition of the Gram matrix failed");
  }

  std::vector<double> eigs(solver.eigenvalues().data(),
                           solver.eigenvalues().data() + g.n);
  std::sort(eigs.begin(), eigs.end(), std::greater<double>());

  double sum = 0.0;
  for (double v : eigs) {
    if (!std::isfinite(v)) throw numerical_error("non-finite eigenvalue");
    sum += v;
  }
  const double expected = g.entries.trace() / static_cast<double>(g.n);
  if (std::abs(sum - expected) > 1e-8 * std::max(1.0, std::abs(expected))) {
    throw numerical_error("eigenvalue sum deviates from trace(G)/n");
  }
  return eigs;
}

double eigendecay_exponent(std::span<const double> eigenvalues) {
  const std::size_t n = eigenvalues.size();
  const std::size_t hi = std::max<std::size_t>(3, n / 4);  // 1-based index range [2, n/4]
  if (n < 3 || hi < 3) {
    throw std::invalid_argument("too few eigenvalues for a decay fit");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  for (std::size_t i = 2; i <= std::min(hi, n); ++i) {
    const double lambda = eigenvalues[i - 1];
    if (!(lambda > 0.0)) continue;
    const double lx = std::log(static_cast<double>(i));
    const double ly = std::log(lambda);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  if (count < 2) {
    throw std::invalid_argument("too few positive eigenvalues for a decay fit");
  }
  const double denom = count * sxx - sx * sx;
  return (count * sxy - sx * sy) / denom;
}

EntropyBoundParams::EntropyBoundParams(double p_in, int d_in, double k_in,
                                       double gamma_in)
    : p(p_in), d(d_in), K(k_in), gamma(gamma_in) {
  if (!(std::isfinite(p) && p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("p must lie in (0, 1)");
  }
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  if (!(std::isfinite(K) && K > 0.0)) {
    throw std::invalid_argument("K must be positive");
  }
  if (!(std::isfinite(gamma) && gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1]");
  }
}

double entropy_bound(const EntropyBoundParams& params, long i) {
  if (i < 1) throw std::invalid_argument("entropy index must be >= 1");
  const double inv_p = 1.0 / params.p;
  const double dp1 = static_cast<double>(params.d + 1);
  return std::pow(3.0 * params.K, inv_p) *
         std::pow(dp1 / (std::numbers::e * params.p), dp1 * inv_p) *
         std::pow(params.gamma, -static_cast<double>(params.d) * inv_p) *
         std::pow(static_cast<double>(i), -inv_p);
}

double covering_bound(double K, int d, double gamma, double eps) {
  if (!(std::isfinite(K) && K > 0.0)) {
    throw std::invalid_argument("K must be positive");
  }
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  if (!(std::isfinite(gamma) && gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1]");
  }
  if (!(std::isfinite(eps) && eps > 0.0 && eps < 0.5)) {
    throw std::invalid_argument("eps must lie in (0, 1/2)");
  }
  return K * std::pow(std::log(1.0 / eps), static_cast<double>(d + 1)) *
         std::pow(gamma, -static_cast<double>(d));
}

double entropy_epsilon_star(double p, int d) {
  if (!(std::isfinite(p) && p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("p must lie in (0, 1)");
  }
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  return std::exp(-static_cast<double>(d + 1) / p);
}

}  // namespace expreg::kernel
