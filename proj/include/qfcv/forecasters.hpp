#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qfcv/core.hpp"

namespace qfcv {

/// Affine predictor intercept + x . coefs.
struct LinearModel {
  double intercept = 0.0;
  std::vector<double> coefs;

  double predict(const TimePoint& z, std::size_t /*horizon*/ = 1) const {
    double v = intercept;
    for (std::size_t j = 0; j < coefs.size(); ++j) v += coefs[j] * z.x[j];
    return v;
  }
};

namespace detail {

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::RowVectorXd x_mean;
  double y_mean = 0.0;
};

inline Design make_design(std::span<const TimePoint> train, bool center) {
  if (train.empty()) throw ValidationError("fit: need at least one training point");
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto p = static_cast<Eigen::Index>(train.front().x.size());
  Design d;
  d.x.resize(n, p);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TimePoint& z = train[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(z.x.size()) != p) {
      throw ValidationError("fit: ragged feature vectors in training window");
    }
    for (Eigen::Index j = 0; j < p; ++j) d.x(i, j) = z.x[static_cast<std::size_t>(j)];
    d.y(i) = z.y;
  }
  if (center) {
    d.x_mean = d.x.colwise().mean();
    d.y_mean = d.y.mean();
    d.x.rowwise() -= d.x_mean;
    d.y.array() -= d.y_mean;
  } else {
    d.x_mean = Eigen::RowVectorXd::Zero(p);
  }
  return d;
}

inline LinearModel to_model(const Design& d, const Eigen::VectorXd& w) {
  LinearModel m;
  m.coefs.assign(w.data(), w.data() + w.size());
  m.intercept = d.y_mean - d.x_mean.dot(w);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Ridge

struct RidgeSpec {
  double lambda = 1.0;
  bool include_intercept = true;
};

/// Minimizes sum (y - b0 - x.w)^2 + lambda |w|^2 in closed form; the intercept is unpenalized.
inline LinearModel fit_ridge(std::span<const TimePoint> train, const RidgeSpec& spec) {
  if (!std::isfinite(spec.lambda) || spec.lambda < 0.0) {
    throw ValidationError("fit_ridge: lambda must be finite and >= 0");
  }
  const detail::Design d = detail::make_design(train, spec.include_intercept);
  const Eigen::Index p = d.x.cols();
  Eigen::VectorXd w;
  if (spec.lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
    if (qr.rank() < p) {
      throw NumericalError("fit_ridge: singular least-squares system (rank " +
                           std::to_string(qr.rank()) + " < " + std::to_string(p) +
                           "); use lambda > 0");
    }
    w = qr.solve(d.y);
  } else {
    Eigen::MatrixXd gram = d.x.transpose() * d.x;
    gram.diagonal().array() += spec.lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("fit_ridge: Cholesky failed");
    w = llt.solve(d.x.transpose() * d.y);
  }
  return detail::to_model(d, w);
}

struct RidgeForecaster {
  RidgeSpec spec;
  LinearModel fit(std::span<const TimePoint> train) const { return fit_ridge(train, spec); }
};

// ---------------------------------------------------------------------------------------------
// Lasso

struct LassoSpec {
  /// Absolute penalty. When unset, lambda = lambda_fraction * lambda_max of the training window.
  std::optional<double> lambda;
  double lambda_fraction = 0.1;
  bool include_intercept = true;
  double tolerance = 1e-7;  // max absolute coefficient change per sweep
  int max_sweeps = 10000;
};

struct LassoFit {
  LinearModel model;
  double lambda = 0.0;
  int sweeps = 0;
  std::vector<double> objective_trace;  // objective after each sweep, when requested
};

inline double soft_threshold(double v, double lambda) {
  if (v > lambda) return v - lambda;
  if (v < -lambda) return v + lambda;
  return 0.0;
}

/// lambda_max = max_j |(1/n) sum_t x_tj y_t| on the (centered, if intercepted) window; the smallest
/// penalty at which every coefficient is zero.
inline double lasso_lambda_max(std::span<const TimePoint> train, bool include_intercept) {
  const detail::Design d = detail::make_design(train, include_intercept);
  const double n = static_cast<double>(d.x.rows());
  return (d.x.transpose() * d.y / n).cwiseAbs().maxCoeff();
}

/// Cyclic coordinate descent on (1/(2n)) sum (y - b0 - x.w)^2 + lambda |w|_1 using covariance
/// updates (the Gram matrix is formed once per fit).
inline LassoFit fit_lasso_detailed(std::span<const TimePoint> train, const LassoSpec& spec,
                                   bool record_objective = false) {
  const detail::Design d = detail::make_design(train, spec.include_intercept);
  const Eigen::Index p = d.x.cols();
  const double n = static_cast<double>(d.x.rows());
  const Eigen::MatrixXd gram = d.x.transpose() * d.x / n;
  const Eigen::VectorXd xty = d.x.transpose() * d.y / n;
  const double yty = d.y.squaredNorm() / n;

  double lambda = 0.0;
  if (spec.lambda) {
    lambda = *spec.lambda;
  } else {
    lambda = spec.lambda_fraction * (p > 0 ? xty.cwiseAbs().maxCoeff() : 0.0);
  }
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw ValidationError("fit_lasso: lambda must be finite and >= 0");
  }

  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
  // grad_j = xty_j - (gram w)_j, the partial residual correlation
  Eigen::VectorXd corr = xty;

  auto objective = [&]() {
    return 0.5 * (yty - 2.0 * xty.dot(w) + w.dot(gram * w)) + lambda * w.lpNorm<1>();
  };

  LassoFit out;
  out.lambda = lambda;
  int sweep = 0;
  for (; sweep < spec.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) continue;
      const double old = w(j);
      const double updated = soft_threshold(corr(j) + gjj * old, lambda) / gjj;
      const double delta = updated - old;
      if (delta != 0.0) {
        corr -= gram.col(j) * delta;
        w(j) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (record_objective) out.objective_trace.push_back(objective());
    if (max_change < spec.tolerance) {
      ++sweep;
      break;
    }
    if (sweep + 1 == spec.max_sweeps) {
      std::ostringstream msg;
      msg << "fit_lasso: no convergence after " << spec.max_sweeps
          << " sweeps (last max coefficient change " << max_change << ", gradient residual "
          << (corr - lambda * w.cwiseSign()).cwiseAbs().maxCoeff() << ")";
      throw NumericalError(msg.str());
    }
  }
  out.sweeps = sweep;
  out.model = detail::to_model(d, w);
  return out;
}

inline LinearModel fit_lasso(std::span<const TimePoint> train, const LassoSpec& spec) {
  return fit_lasso_detailed(train, spec).model;
}

struct LassoForecaster {
  LassoSpec spec;
  LinearModel fit(std::span<const TimePoint> train) const { return fit_lasso(train, spec); }
};

// ---------------------------------------------------------------------------------------------
// GARCH(1,1)

struct Garch11Params {
  double omega = 0.1;
  double tau = 0.1;   // ARCH weight on the last squared return
  double beta = 0.8;  // GARCH weight on the last conditional variance
};

struct Garch11Model {
  double omega = 0.0;
  double tau = 0.0;
  double beta = 0.0;
  std::vector<double> sigma2;  // fitted conditional variances over the training window
  double last_sq_return = 0.0;
  double log_likelihood = 0.0;
  std::size_t max_horizon = 1;

  double unconditional_variance() const { return omega / (1.0 - tau - beta); }
  double predict(const TimePoint& z, std::size_t horizon) const;
};

/// Multiperiod variance forecast: r = 1 gives omega + tau V + beta sigma^2 at the end of the
/// training window; r > 1 applies omega + (tau + beta) * previous forecast.
inline double garch_multiperiod_forecast(const Garch11Model& model, std::size_t r) {
  if (r < 1 || r > model.max_horizon) {
    throw ValidationError("garch_multiperiod_forecast: horizon " + std::to_string(r) +
                          " outside 1.." + std::to_string(model.max_horizon));
  }
  if (model.sigma2.empty()) throw ValidationError("garch_multiperiod_forecast: unfitted model");
  double f = model.omega + model.tau * model.last_sq_return + model.beta * model.sigma2.back();
  for (std::size_t step = 2; step <= r; ++step) f = model.omega + (model.tau + model.beta) * f;
  return f;
}

inline double Garch11Model::predict(const TimePoint& /*z*/, std::size_t horizon) const {
  return garch_multiperiod_forecast(*this, horizon);
}

namespace detail {

/// Gaussian quasi log-likelihood; sigma_1^2 starts at the sample variance.
inline double garch_loglik(std::span<const double> r, double omega, double tau, double beta,
                           double init_var, std::vector<double>* sigma2_out = nullptr) {
  double s2 = init_var;
  double ll = 0.0;
  if (sigma2_out) sigma2_out->resize(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    if (t > 0) s2 = omega + tau * r[t - 1] * r[t - 1] + beta * s2;
    if (!(s2 > 0.0) || !std::isfinite(s2)) return -std::numeric_limits<double>::infinity();
    ll -= 0.5 * (std::log(2.0 * std::numbers::pi) + std::log(s2) + r[t] * r[t] / s2);
    if (sigma2_out) (*sigma2_out)[t] = s2;
  }
  return ll;
}

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Unconstrained (log omega, logit(tau + beta), logit(tau / (tau + beta))).
inline std::array<double, 3> garch_to_free(double omega, double tau, double beta) {
  const double s = tau + beta;
  return {std::log(omega), logit(s), logit(tau / s)};
}

inline Garch11Params garch_from_free(const std::array<double, 3>& v) {
  // short windows can push the fit toward tau + beta = 1, where logistic() rounds to exactly 1
  const double s = std::min(logistic(v[1]), 1.0 - 1e-9);
  const double u = logistic(v[2]);
  return {std::exp(v[0]), s * u, s * (1.0 - u)};
}

/// Nelder-Mead minimization with standard coefficients (1, 2, 0.5, 0.5).
template <class F>
std::array<double, 3> nelder_mead(F&& f, std::array<double, 3> start, double step, int max_iter,
                                  double ftol) {
  constexpr std::size_t dim = 3;
  std::array<std::array<double, dim>, dim + 1> pts{};
  std::array<double, dim + 1> vals{};
  pts[0] = start;
  for (std::size_t i = 0; i < dim; ++i) {
    pts[i + 1] = start;
    pts[i + 1][i] += step;
  }
  for (std::size_t i = 0; i <= dim; ++i) vals[i] = f(pts[i]);

  for (int iter = 0; iter < max_iter; ++iter) {
    std::array<std::size_t, dim + 1> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    auto sorted_pts = pts;
    auto sorted_vals = vals;
    for (std::size_t i = 0; i <= dim; ++i) {
      pts[i] = sorted_pts[order[i]];
      vals[i] = sorted_vals[order[i]];
    }
    if (std::abs(vals[dim] - vals[0]) <= ftol * (std::abs(vals[0]) + ftol)) break;

    std::array<double, dim> centroid{};
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += pts[i][j] / dim;
    }
    auto along = [&](double coef) {
      std::array<double, dim> q{};
      for (std::size_t j = 0; j < dim; ++j) q[j] = centroid[j] + coef * (pts[dim][j] - centroid[j]);
      return q;
    };
    const auto reflected = along(-1.0);
    const double fr = f(reflected);
    if (fr < vals[0]) {
      const auto expanded = along(-2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        pts[dim] = expanded;
        vals[dim] = fe;
      } else {
        pts[dim] = reflected;
        vals[dim] = fr;
      }
    } else if (fr < vals[dim - 1]) {
      pts[dim] = reflected;
      vals[dim] = fr;
    } else {
      const bool outside = fr < vals[dim];
      const auto contracted = along(outside ? -0.5 : 0.5);
      const double fc = f(contracted);
      if (fc < std::min(fr, vals[dim])) {
        pts[dim] = contracted;
        vals[dim] = fc;
      } else {
        for (std::size_t i = 1; i <= dim; ++i) {
          for (std::size_t j = 0; j < dim; ++j) pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= dim; ++i) {
    if (vals[i] < vals[best]) best = i;
  }
  return pts[best];
}

}  // namespace detail

struct Garch11Fit {
  Garch11Model model;
  double initial_log_likelihood = 0.0;
};

/// Quasi maximum likelihood for (omega, tau, beta) by simplex search over an unconstrained
/// reparameterization that keeps omega > 0, tau, beta >= 0 and tau + beta < 1.
inline Garch11Fit fit_garch11_detailed(std::span<const double> returns,
                                       std::optional<Garch11Params> init = std::nullopt,
                                       std::size_t max_horizon = 1) {
  if (returns.size() < 50) {
    throw ValidationError("fit_garch11: need at least 50 returns, got " +
                          std::to_string(returns.size()));
  }
  double mean_sq = 0.0;
  for (double r : returns) {
    if (!std::isfinite(r)) throw ValidationError("fit_garch11: non-finite return");
    mean_sq += r * r;
  }
  mean_sq /= static_cast<double>(returns.size());
  if (!(mean_sq > 0.0)) {
    throw ValidationError("fit_garch11: degenerate likelihood (all returns are zero)");
  }

  const Garch11Params start = init.value_or(Garch11Params{0.05 * mean_sq, 0.1, 0.8});
  if (!(start.omega > 0.0) || !(start.tau > 0.0) || !(start.beta > 0.0) ||
      start.tau + start.beta >= 1.0) {
    throw ValidationError("fit_garch11: initial guess must satisfy omega, tau, beta > 0 and "
                          "tau + beta < 1");
  }

  auto negll = [&](const std::array<double, 3>& v) {
    const Garch11Params g = detail::garch_from_free(v);
    const double ll = detail::garch_loglik(returns, g.omega, g.tau, g.beta, mean_sq);
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
  };

  auto v = detail::garch_to_free(start.omega, start.tau, start.beta);
  const double initial = -negll(v);
  // one restart from the first optimum escapes premature simplex collapse
  v = detail::nelder_mead(negll, v, 0.5, 4000, 1e-12);
  v = detail::nelder_mead(negll, v, 0.1, 4000, 1e-12);

  const Garch11Params g = detail::garch_from_free(v);
  Garch11Fit out;
  out.initial_log_likelihood = initial;
  Garch11Model& m = out.model;
  m.omega = g.omega;
  m.tau = g.tau;
  m.beta = g.beta;
  m.max_horizon = max_horizon;
  m.last_sq_return = returns.back() * returns.back();
  m.log_likelihood = detail::garch_loglik(returns, g.omega, g.tau, g.beta, mean_sq, &m.sigma2);
  if (!std::isfinite(m.log_likelihood) || !(m.omega > 0.0) || m.tau + m.beta >= 1.0) {
    std::ostringstream msg;
    msg << "fit_garch11: optimizer left the feasible region; last feasible iterate (omega="
        << g.omega << ", tau=" << g.tau << ", beta=" << g.beta << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

inline Garch11Model fit_garch11(std::span<const double> returns,
                                std::optional<Garch11Params> init = std::nullopt,
                                std::size_t max_horizon = 1) {
  return fit_garch11_detailed(returns, init, max_horizon).model;
}

/// Fits on the returns stored in x[0] of each training point.
struct GarchForecaster {
  std::size_t max_horizon = 1;

  Garch11Model fit(std::span<const TimePoint> train) const {
    std::vector<double> r;
    r.reserve(train.size());
    for (const TimePoint& z : train) {
      if (z.x.empty()) throw ValidationError("GarchForecaster: point without a return feature");
      r.push_back(z.x[0]);
    }
    return fit_garch11(r, std::nullopt, max_horizon);
  }
};

}  // namespace qfcv
