#include "expreg/als.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace expreg::als {

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be finite");
  }
}

}  // namespace

ALSConfig::ALSConfig(double tau_in) : tau(tau_in) {
  require_finite(tau, "tau");
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("tau must lie in (0, 1)");
  }
}

ClipLevel::ClipLevel(double m) : M(m) {
  require_finite(M, "clip level");
  if (!(M > 0.0)) {
    throw std::invalid_argument("clip level must be positive");
  }
}

DiscreteDistribution::DiscreteDistribution(std::vector<Atom> atoms)
    : atoms_(std::move(atoms)) {
  if (atoms_.empty()) {
    throw std::invalid_argument("distribution needs at least one atom");
  }
  double total = 0.0;
  for (const Atom& a : atoms_) {
    require_finite(a.value, "atom value");
    require_finite(a.mass, "atom mass");
    if (!(a.mass > 0.0)) {
      throw std::invalid_argument("atom masses must be strictly positive");
    }
    total += a.mass;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("atom masses must sum to 1 (within 1e-9)");
  }
  for (Atom& a : atoms_) a.mass /= total;
  std::sort(atoms_.begin(), atoms_.end(),
            [](const Atom& a, const Atom& b) { return a.value < b.value; });
}

DiscreteDistribution DiscreteDistribution::point_mass(double value) {
  return DiscreteDistribution({{value, 1.0}});
}

double DiscreteDistribution::mean() const {
  double m = 0.0;
  for (const Atom& a : atoms_) m += a.value * a.mass;
  return m;
}

double als_loss(const ALSConfig& cfg, double y, double t) {
  require_finite(y, "y");
  require_finite(t, "t");
  const double r = y - t;
  const double w = (y < t) ? (1.0 - cfg.tau) : cfg.tau;
  return w * r * r;
}

double clip(double t, const ClipLevel& level) {
  require_finite(t, "t");
  return std::clamp(t, -level.M, level.M);
}

double lipschitz_constant(const ALSConfig& cfg, const ClipLevel& level) {
  return cfg.C_tau() * 4.0 * level.M;
}

namespace {

// Newey first-order condition: positive part minus negative part. Strictly
// decreasing in t with a root inside the atom range.
double newey_gap(const DiscreteDistribution& q, const ALSConfig& cfg, double t) {
  double above = 0.0;
  double below = 0.0;
  for (const auto& a : q.atoms()) {
    if (a.value >= t) {
      above += (a.value - t) * a.mass;
    } else {
      below += (t - a.value) * a.mass;
    }
  }
  return cfg.tau * above - (1.0 - cfg.tau) * below;
}

}  // namespace

double expectile(const DiscreteDistribution& q, const ALSConfig& cfg) {
  const double span = q.span();
  if (q.size() == 1 || span == 0.0) return q.min_value();

  double lo = q.min_value();
  double hi = q.max_value();
  // newey_gap(lo) >= 0 and newey_gap(hi) <= 0; bisect to a narrow bracket.
  const double width_target = 1e-14 * span;
  for (int iter = 0; iter < 200 && (hi - lo) > width_target; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double g = newey_gap(q, cfg, mid);
    if (g > 0.0) {
      lo = mid;
    } else if (g < 0.0) {
      hi = mid;
    } else {
      return mid;
    }
  }

  // One Newton polish: the condition is linear between atoms, so solving the
  // local linear model at the bracket midpoint lands on the root exactly.
  const double t_hat = 0.5 * (lo + hi);
  double mass_above = 0.0, sum_above = 0.0;
  double mass_below = 0.0, sum_below = 0.0;
  for (const auto& a : q.atoms()) {
    if (a.value >= t_hat) {
      mass_above += a.mass;
      sum_above += a.value * a.mass;
    } else {
      mass_below += a.mass;
      sum_below += a.value * a.mass;
    }
  }
  const double denom = cfg.tau * mass_above + (1.0 - cfg.tau) * mass_below;
  const double numer = cfg.tau * sum_above + (1.0 - cfg.tau) * sum_below;
  const double polished = numer / denom;
  return std::clamp(polished, q.min_value(), q.max_value());
}

double inner_risk(const DiscreteDistribution& q, const ALSConfig& cfg, double t) {
  require_finite(t, "t");
  double risk = 0.0;
  for (const auto& a : q.atoms()) {
    const double r = a.value - t;
    const double w = (a.value < t) ? (1.0 - cfg.tau) : cfg.tau;
    risk += w * r * r * a.mass;
  }
  return risk;
}

double excess_inner_risk(const DiscreteDistribution& q, const ALSConfig& cfg,
                         double t) {
  const double t_star = expectile(q, cfg);
  return inner_risk(q, cfg, t) - inner_risk(q, cfg, t_star);
}

}  // namespace expreg::als
