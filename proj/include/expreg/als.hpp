#pragma once

#include <cstddef>
#include <vector>

namespace expreg::als {

/// Asymmetry level tau together with the derived constants the risk bounds
/// are built from. c_tau and C_tau are always recomputed from tau.
struct ALSConfig {
  explicit ALSConfig(double tau_in);

  double tau;

  double c_tau() const { return tau < 0.5 ? tau : 1.0 - tau; }
  double C_tau() const { return tau > 0.5 ? tau : 1.0 - tau; }
};

/// Clipping threshold M > 0: predictions are truncated to [-M, M].
struct ClipLevel {
  explicit ClipLevel(double m);
  double M;
};

/// Finitely supported distribution on the reals; the oracle object for all
/// expectile and inner-risk computations. Atoms are kept sorted by value.
/// Masses whose sum drifts from 1 by at most 1e-9 are renormalized; a larger
/// drift is rejected as bad data.
class DiscreteDistribution {
 public:
  struct Atom {
    double value;
    double mass;
  };

  explicit DiscreteDistribution(std::vector<Atom> atoms);

  static DiscreteDistribution point_mass(double value);

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double min_value() const { return atoms_.front().value; }
  double max_value() const { return atoms_.back().value; }
  double span() const { return max_value() - min_value(); }
  double mean() const;

 private:
  std::vector<Atom> atoms_;
};

/// Asymmetric least squares loss: (1-tau)(y-t)^2 below the prediction,
/// tau(y-t)^2 at or above it. Ties y = t take the tau branch.
double als_loss(const ALSConfig& cfg, double y, double t);

/// Truncates t to [-M, M].
double clip(double t, const ClipLevel& level);

/// Local Lipschitz constant of the loss on [-M, M]: C_tau * 4M.
double lipschitz_constant(const ALSConfig& cfg, const ClipLevel& level);

/// The unique t* solving tau * sum_{y>=t*} (y-t*) m(y) =
/// (1-tau) * sum_{y<t*} (t*-y) m(y). Located by bisection on the atom range
/// followed by one Newton step on the piecewise-linear first-order condition.
double expectile(const DiscreteDistribution& q, const ALSConfig& cfg);

/// sum_y L_tau(y, t) m(y); nonnegative and convex in t.
double inner_risk(const DiscreteDistribution& q, const ALSConfig& cfg, double t);

/// inner_risk(q, t) - inner_risk(q, expectile(q)). Satisfies the quadratic
/// sandwich c_tau (t-t*)^2 <= excess <= C_tau (t-t*)^2.
double excess_inner_risk(const DiscreteDistribution& q, const ALSConfig& cfg,
                         double t);

}  // namespace expreg::als
