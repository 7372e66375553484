#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace expreg::kernel {

/// Gaussian RBF width parameter. The capacity bounds assume gamma in (0,1];
/// larger widths are legal for fitting and reported via width_in_unit().
struct GaussianKernel {
  explicit GaussianKernel(double gamma_in);

  double gamma;

  bool width_in_unit() const { return gamma <= 1.0; }
};

/// k_gamma(x, x') = exp(-gamma^-2 ||x - x'||^2), in (0, 1], equal to 1 iff
/// the points coincide.
double eval(const GaussianKernel& k, std::span<const double> x,
            std::span<const double> y);

/// Symmetric kernel matrix over a point set; the empirical stand-in for the
/// integral operator T_k. Entries carry an exact unit diagonal and are
/// mirrored from the upper triangle so the matrix is symmetric to the bit.
struct GramMatrix {
  Eigen::MatrixXd entries;
  std::vector<double> points;  // row-major n x dim
  std::size_t n = 0;
  std::size_t dim = 0;

  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * dim, dim};
  }
};

GramMatrix gram(const GaussianKernel& k, std::span<const double> points,
                std::size_t n, std::size_t dim, unsigned threads = 0);

/// Eigenvalues of (1/n) G, sorted nonincreasing. Their sum is trace(G)/n = 1.
std::vector<double> empirical_eigendecay(const GramMatrix& g);

/// Least-squares slope of log lambda_i versus log i over i in [2, n/4]
/// (1-based), skipping the leading eigenvalue and the noisy tail.
double eigendecay_exponent(std::span<const double> eigenvalues);

/// Inputs of the entropy-number bound: exponent p in (0,1), dimension d,
/// the d-dependent constant K (not quantified by the theory; default 1),
/// and the kernel width gamma in (0,1].
struct EntropyBoundParams {
  EntropyBoundParams(double p_in, int d_in, double k_in, double gamma_in);

  double p;
  int d;
  double K;
  double gamma;
};

/// (3K)^(1/p) ((d+1)/(e p))^((d+1)/p) gamma^(-d/p) i^(-1/p).
double entropy_bound(const EntropyBoundParams& params, long i);

/// K (log 1/eps)^(d+1) gamma^(-d) for eps in (0, 1/2).
double covering_bound(double K, int d, double gamma, double eps);

/// The maximizer of eps^p (log 1/eps)^(d+1): eps* = e^(-(d+1)/p).
double entropy_epsilon_star(double p, int d);

}  // namespace expreg::kernel
