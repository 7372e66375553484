#include "expreg/solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "expreg/errors.hpp"
#include "expreg/parallel.hpp"

namespace expreg::solver {

namespace {

double loss_term(double tau, double y, double t) {
  const double r = y - t;
  const double w = (y < t) ? (1.0 - tau) : tau;
  return w * r * r;
}

double objective_from_predictions(double tau, double lambda,
                                  const Eigen::VectorXd& c,
                                  const Eigen::VectorXd& gc,
                                  const Eigen::VectorXd& y) {
  const std::size_t n = static_cast<std::size_t>(y.size());
  double risk = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    risk += loss_term(tau, y(static_cast<Eigen::Index>(i)),
                      gc(static_cast<Eigen::Index>(i)));
  }
  return lambda * c.dot(gc) + risk / static_cast<double>(n);
}

Eigen::VectorXd residual_weights(double tau, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& gc) {
  Eigen::VectorXd w(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    w(i) = (y(i) - gc(i) >= 0.0) ? tau : (1.0 - tau);
  }
  return w;
}

}  // namespace

double objective(const kernel::GramMatrix& gram, std::span<const double> y,
                 double tau, double lambda, std::span<const double> coeffs) {
  const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(),
                                            static_cast<Eigen::Index>(coeffs.size()));
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(),
                                             static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd gc = gram.entries * c;
  return objective_from_predictions(tau, lambda, c, gc, yv);
}

Eigen::VectorXd objective_gradient(const kernel::GramMatrix& gram,
                                   std::span<const double> y, double tau,
                                   double lambda,
                                   std::span<const double> coeffs) {
  const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(),
                                            static_cast<Eigen::Index>(coeffs.size()));
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(),
                                             static_cast<Eigen::Index>(y.size()));
  const double n = static_cast<double>(y.size());
  const Eigen::VectorXd gc = gram.entries * c;
  const Eigen::VectorXd w = residual_weights(tau, yv, gc);
  // grad J = 2 G (lambda c - (1/n) w .* (y - Gc)); the loss is C^1, so this
  // holds across the residual-sign kinks as well.
  const Eigen::VectorXd inner =
      lambda * c - (w.array() * (yv - gc).array()).matrix() / n;
  return 2.0 * (gram.entries * inner);
}

ExpectileModel fit(const Dataset& data, double tau, double lambda, double gamma,
                   const FitOptions& options) {
  if (!(std::isfinite(tau) && tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("tau must lie in (0, 1)");
  }
  if (!(std::isfinite(lambda) && lambda > 0.0)) {
    throw std::invalid_argument("lambda must be positive");
  }
  if (!(std::isfinite(gamma) && gamma > 0.0)) {
    throw std::invalid_argument("gamma must be positive");
  }

  const std::size_t n = data.n();
  const double nd = static_cast<double>(n);
  const kernel::GaussianKernel kern(gamma);
  const kernel::GramMatrix gram =
      kernel::gram(kern, data.x(), n, data.dim(), options.threads);

  const Eigen::Map<const Eigen::VectorXd> y(data.y().data(),
                                            static_cast<Eigen::Index>(n));
  const double y_scale = data.max_abs_y();
  const double grad_tol = 1e-8 * (1.0 + y_scale);

  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd gc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd w = residual_weights(tau, y, gc);
  double obj = objective_from_predictions(tau, lambda, c, gc, y);

  Diagnostics diag;
  diag.width_above_unit = !kern.width_in_unit();
  diag.objective_trace.push_back(obj);

  auto gradient_norm = [&](const Eigen::VectorXd& cc, const Eigen::VectorXd& gcc) {
    const Eigen::VectorXd ww = residual_weights(tau, y, gcc);
    const Eigen::VectorXd inner =
        lambda * cc - (ww.array() * (y - gcc).array()).matrix() / nd;
    return (2.0 * (gram.entries * inner)).norm();
  };

  const double base_jitter = 1e-12 * gram.entries.trace() / nd;
  bool converged = false;
  int iter = 0;

  while (iter < options.max_iterations) {
    ++iter;

    // Weighted ridge system (G + n lambda W^-1) c = y for the current signs.
    Eigen::MatrixXd a = gram.entries;
    a.diagonal().array() += nd * lambda / w.array();

    Eigen::LLT<Eigen::MatrixXd> llt(a);
    double jitter = 0.0;
    while (llt.info() != Eigen::Success) {
      jitter = (jitter == 0.0) ? base_jitter : jitter * 10.0;
      if (jitter > 1e-6) {
        throw numerical_error("Cholesky factorization failed after jitter escalation");
      }
      Eigen::MatrixXd aj = a;
      aj.diagonal().array() += jitter;
      llt.compute(aj);
    }
    diag.jitter = std::max(diag.jitter, jitter);

    const Eigen::VectorXd c_full = llt.solve(y);
    const Eigen::VectorXd gc_full = gram.entries * c_full;

    // The IRLS direction is a descent direction; halve the step until the
    // objective stops increasing (at most 30 times).
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd c_next, gc_next;
    double obj_next = obj;
    for (int h = 0; h <= 30; ++h) {
      c_next = c + step * (c_full - c);
      gc_next = gc + step * (gc_full - gc);
      obj_next = objective_from_predictions(tau, lambda, c_next, gc_next, y);
      if (obj_next <= obj) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No decrease at step 2^-30: numerically at the optimum already.
      converged = true;
      break;
    }

    const double obj_prev = obj;
    c = c_next;
    gc = gc_next;
    obj = obj_next;
    diag.objective_trace.push_back(obj);

    const Eigen::VectorXd w_next = residual_weights(tau, y, gc);
    if (w_next == w) {
      converged = true;
      break;
    }
    w = w_next;
    if (obj_prev - obj < 1e-12 * std::max(1.0, obj_prev)) {
      // Stalled objective with a changing sign pattern: accept only if the
      // stationarity condition already holds.
      if (gradient_norm(c, gc) <= grad_tol) {
        converged = true;
        break;
      }
    }
  }

  diag.iterations = iter;
  diag.objective = obj;
  diag.gradient_norm = gradient_norm(c, gc);

  if (!converged) {
    throw convergence_error("IRLS did not converge", diag.iterations,
                            diag.objective, diag.gradient_norm);
  }
  if (!(std::isfinite(diag.objective) && std::isfinite(diag.gradient_norm))) {
    throw numerical_error("non-finite solver state at convergence");
  }
  if (diag.gradient_norm > grad_tol) {
    throw convergence_error("stationarity tolerance not met", diag.iterations,
                            diag.objective, diag.gradient_norm);
  }

  ExpectileModel model;
  model.support_points = data.x();
  model.n = n;
  model.dim = data.dim();
  model.coefficients.assign(c.data(), c.data() + n);
  model.kern = kern;
  model.lambda = lambda;
  model.tau = tau;
  if (options.clip_level) {
    model.clip_level = als::ClipLevel(*options.clip_level);
  } else if (y_scale > 0.0) {
    model.clip_level = als::ClipLevel(y_scale);
  }
  model.diagnostics = std::move(diag);
  return model;
}

double predict(const ExpectileModel& m, std::span<const double> x) {
  if (x.size() != m.dim) {
    throw std::invalid_argument("query dimension does not match the model");
  }
  const double inv_g2 = 1.0 / (m.kern.gamma * m.kern.gamma);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double* xi = m.support_points.data() + i * m.dim;
    double sq = 0.0;
    for (std::size_t c = 0; c < m.dim; ++c) {
      const double d = xi[c] - x[c];
      sq += d * d;
    }
    double v = std::exp(-sq * inv_g2);
    if (v < 1e-300) v = 0.0;
    acc += m.coefficients[i] * v;
  }
  return acc;
}

std::vector<double> predict_many(const ExpectileModel& m,
                                 std::span<const double> xs, std::size_t count,
                                 unsigned threads) {
  if (xs.size() != count * m.dim) {
    throw std::invalid_argument("query storage does not match count * dim");
  }
  std::vector<double> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    out[i] = predict(m, {xs.data() + i * m.dim, m.dim});
  });
  return out;
}

double predict_clipped(const ExpectileModel& m, std::span<const double> x) {
  if (!m.clip_level) {
    throw std::invalid_argument("model carries no clip level");
  }
  return als::clip(predict(m, x), *m.clip_level);
}

double empirical_risk(const std::function<double(std::span<const double>)>& f,
                      const Dataset& data, double tau) {
  const als::ALSConfig cfg(tau);
  double total = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    total += als::als_loss(cfg, data.y()[i], f(data.x_row(i)));
  }
  return total / static_cast<double>(data.n());
}

double empirical_risk(const ExpectileModel& m, const Dataset& data, double tau,
                      bool clipped) {
  const als::ALSConfig cfg(tau);
  double total = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double p =
        clipped ? predict_clipped(m, data.x_row(i)) : predict(m, data.x_row(i));
    total += als::als_loss(cfg, data.y()[i], p);
  }
  return total / static_cast<double>(data.n());
}

nlohmann::json model_to_json(const ExpectileModel& m) {
  nlohmann::json j;
  j["tau"] = m.tau;
  j["lambda"] = m.lambda;
  j["gamma"] = m.kern.gamma;
  if (m.clip_level) {
    j["clip_level"] = m.clip_level->M;
  } else {
    j["clip_level"] = nullptr;
  }
  j["n"] = m.n;
  j["dim"] = m.dim;
  j["support_points"] = m.support_points;
  j["coefficients"] = m.coefficients;
  j["diagnostics"] = {{"iterations", m.diagnostics.iterations},
                      {"objective", m.diagnostics.objective},
                      {"gradient_norm", m.diagnostics.gradient_norm}};
  return j;
}

ExpectileModel model_from_json(const nlohmann::json& j) {
  ExpectileModel m;
  try {
    m.tau = j.at("tau").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.kern = kernel::GaussianKernel(j.at("gamma").get<double>());
    if (!j.at("clip_level").is_null()) {
      m.clip_level = als::ClipLevel(j.at("clip_level").get<double>());
    }
    m.n = j.at("n").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.support_points = j.at("support_points").get<std::vector<double>>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    if (j.contains("diagnostics")) {
      const auto& d = j.at("diagnostics");
      m.diagnostics.iterations = d.value("iterations", 0);
      m.diagnostics.objective = d.value("objective", 0.0);
      m.diagnostics.gradient_norm = d.value("gradient_norm", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("malformed model document: ") + e.what());
  }
  if (m.support_points.size() != m.n * m.dim ||
      m.coefficients.size() != m.n) {
    throw io_error("model document has inconsistent array sizes");
  }
  m.diagnostics.width_above_unit = !m.kern.width_in_unit();
  return m;
}

void save_model(const ExpectileModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << model_to_json(m).dump(2) << '\n';
  if (!out) throw io_error("write to " + path + " failed");
}

ExpectileModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("cannot parse ") + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace expreg::solver
