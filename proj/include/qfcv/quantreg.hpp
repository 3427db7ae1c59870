#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qfcv/core.hpp"

namespace qfcv {

namespace detail {
inline void check_level(double level, const char* who) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ValidationError(std::string(who) + ": level must lie in (0, 1), got " +
                          std::to_string(level));
  }
}
}  // namespace detail

/// pinball_b(t) = b t for t > 0 and (b - 1) t for t <= 0.
inline double pinball(double level, double t) {
  detail::check_level(level, "pinball");
  return t > 0.0 ? level * t : (level - 1.0) * t;
}

/// 1-based rank of the lower empirical quantile: the smallest k with k >= level * count. Products
/// within 1e-9 of an integer are treated as that integer.
inline std::size_t lower_quantile_rank(double level, std::size_t count) {
  const double pos = level * static_cast<double>(count);
  auto k = static_cast<std::size_t>(std::ceil(pos - 1e-9));
  return std::clamp<std::size_t>(k, 1, count);
}

/// The smallest level-quantile of the empirical distribution of `values` (an order statistic).
inline double empirical_quantile(std::span<const double> values, double level) {
  if (values.empty()) throw ValidationError("empirical_quantile: empty input");
  detail::check_level(level, "empirical_quantile");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t k = lower_quantile_rank(level, v.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

/// Affine conditional-quantile model intercept + coefs . features.
struct LinearQuantileModel {
  double level = 0.5;
  double intercept = 0.0;
  std::vector<double> coefs;
  bool degenerate = false;  // some feature columns were collinear with the others and set to 0
  int iterations = 0;

  double predict(std::span<const double> features) const {
    if (features.size() != coefs.size()) {
      throw ValidationError("LinearQuantileModel: expected " + std::to_string(coefs.size()) +
                            " features, got " + std::to_string(features.size()));
    }
    double v = intercept;
    for (std::size_t j = 0; j < coefs.size(); ++j) v += coefs[j] * features[j];
    return v;
  }
};

/// (1/K) sum pinball(y_i - f(x_i)) over the rows of `features`.
inline double pinball_risk(const LinearQuantileModel& model, const Eigen::MatrixXd& features,
                           std::span<const double> targets) {
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) row[static_cast<std::size_t>(j)] = features(i, j);
    total += pinball(model.level, targets[static_cast<std::size_t>(i)] - model.predict(row));
  }
  return total / static_cast<double>(features.rows());
}

namespace detail {

/// Right derivative in t of rho(r + rate * t) at t = 0.
inline double pinball_slope(double r, double rate, double level) {
  if (r > 0.0) return level * rate;
  if (r < 0.0) return (level - 1.0) * rate;
  return rate > 0.0 ? level * rate : (level - 1.0) * rate;
}

/// Columns of `x` kept in order when each is tested for linear independence from those before.
inline std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& x) {
  std::vector<Eigen::Index> keep;
  Eigen::MatrixXd basis(x.rows(), 0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::VectorXd v = x.col(j);
    const double norm = v.norm();
    if (norm == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < basis.cols(); ++k) v -= basis.col(k).dot(v) * basis.col(k);
    }
    if (v.norm() > 1e-10 * norm) {
      basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
      basis.col(basis.cols() - 1) = v / v.norm();
      keep.push_back(j);
    }
  }
  return keep;
}

/// Picks q linearly independent rows, preferring the given order.
inline std::vector<Eigen::Index> independent_rows(const Eigen::MatrixXd& x,
                                                  const std::vector<Eigen::Index>& order) {
  const Eigen::Index q = x.cols();
  std::vector<Eigen::Index> rows;
  Eigen::MatrixXd basis(q, 0);
  for (Eigen::Index i : order) {
    Eigen::VectorXd v = x.row(i).transpose();
    const double norm = v.norm();
    if (norm == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < basis.cols(); ++k) v -= basis.col(k).dot(v) * basis.col(k);
    }
    if (v.norm() > 1e-9 * norm) {
      basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
      basis.col(basis.cols() - 1) = v / v.norm();
      rows.push_back(i);
      if (static_cast<Eigen::Index>(rows.size()) == q) break;
    }
  }
  return rows;
}

struct Breakpoint {
  double t;
  Eigen::Index row;
  double weight;
};

/// Rows interpolated by an exact minimizer of sum_i rho(y_i - x_i . b) over b for a
/// full-column-rank design x. Walks the
/// vertices of the piecewise-linear risk: each vertex interpolates q rows, each step leaves one
/// interpolated row along the steepest descending edge and stops at the weighted-median breakpoint.
/// Once no edge descends, flat edges are followed while they decrease b lexicographically, so ties
/// resolve to the lexicographically smallest vertex reachable along flat edges.
inline std::vector<Eigen::Index> quantile_vertex_descent(const Eigen::MatrixXd& x,
                                                         const Eigen::VectorXd& y, double level,
                                                         int& iterations) {
  const Eigen::Index k = x.rows();
  const Eigen::Index q = x.cols();

  // start near the optimum: least squares with the intercept shifted to the residual quantile
  Eigen::VectorXd b0 = x.colPivHouseholderQr().solve(y);
  {
    Eigen::VectorXd r = y - x * b0;
    b0(0) += empirical_quantile(std::span<const double>(r.data(), static_cast<std::size_t>(k)), level);
  }
  const Eigen::VectorXd r0 = y - x * b0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index c) { return std::abs(r0(a)) < std::abs(r0(c)); });
  std::vector<Eigen::Index> basis = independent_rows(x, order);
  if (static_cast<Eigen::Index>(basis.size()) != q) {
    throw NumericalError("fit_linear_quantile: design has no nonsingular row subset");
  }

  Eigen::MatrixXd a(q, q);
  Eigen::VectorXd ya(q);
  Eigen::VectorXd b;
  Eigen::MatrixXd z;
  Eigen::VectorXd r;
  std::vector<char> in_basis(static_cast<std::size_t>(k), 0);

  auto refresh = [&]() {
    for (Eigen::Index j = 0; j < q; ++j) {
      a.row(j) = x.row(basis[static_cast<std::size_t>(j)]);
      ya(j) = y(basis[static_cast<std::size_t>(j)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    b = lu.solve(ya);
    z = x * lu.inverse();  // z(i, j) = x_i . d_j where d_j is the edge leaving basis row j
    r = y - x * b;
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (Eigen::Index i : basis) {
      in_basis[static_cast<std::size_t>(i)] = 1;
      r(i) = 0.0;
    }
  };

  auto edge_slope = [&](Eigen::Index j, double s, double& scale) {
    double g = 0.0;
    scale = 1.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double rate = -s * z(i, j);
      if (rate == 0.0) continue;
      g += pinball_slope(r(i), rate, level);
      scale += std::abs(rate);
    }
    return g;
  };

  // breakpoints along edge (j, s), sorted by step length
  std::vector<Breakpoint> bps;
  auto collect = [&](Eigen::Index j, double s) {
    bps.clear();
    for (Eigen::Index i = 0; i < k; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || r(i) == 0.0) continue;
      const double rate = -s * z(i, j);
      if (rate == 0.0 || r(i) * rate >= 0.0) continue;
      bps.push_back({-r(i) / rate, i, std::abs(rate)});
    }
    std::sort(bps.begin(), bps.end(), [](const Breakpoint& u, const Breakpoint& v) {
      return u.t < v.t || (u.t == v.t && u.row < v.row);
    });
  };

  const int max_iter = 200 + 50 * static_cast<int>(k);
  iterations = 0;
  refresh();

  // descent phase
  for (;; ++iterations) {
    if (iterations > max_iter) {
      throw NumericalError("fit_linear_quantile: no convergence after " + std::to_string(max_iter) +
                           " vertex steps");
    }
    double best = 0.0;
    Eigen::Index best_j = -1;
    double best_s = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      for (double s : {1.0, -1.0}) {
        double scale = 1.0;
        const double g = edge_slope(j, s, scale);
        if (g < -1e-11 * scale && g < best) {
          best = g;
          best_j = j;
          best_s = s;
        }
      }
    }
    if (best_j < 0) break;

    collect(best_j, best_s);
    double slope = best;
    Eigen::Index entering = -1;
    for (const Breakpoint& bp : bps) {
      slope += bp.weight;
      if (slope >= 0.0) {
        entering = bp.row;
        break;
      }
    }
    if (entering < 0) {
      // the slope past the last breakpoint is >= 0 in exact arithmetic; rounding can leave it
      // marginally negative
      if (bps.empty()) throw NumericalError("fit_linear_quantile: unbounded descent direction");
      entering = bps.back().row;
    }
    basis[static_cast<std::size_t>(best_j)] = entering;
    refresh();
  }

  // lexicographic tie-break along flat edges
  for (int guard = 0; guard < max_iter; ++guard) {
    bool moved = false;
    for (Eigen::Index j = 0; j < q && !moved; ++j) {
      for (double s : {1.0, -1.0}) {
        double scale = 1.0;
        const double g = edge_slope(j, s, scale);
        if (std::abs(g) > 1e-11 * scale) continue;
        const Eigen::VectorXd dir = s * (a.partialPivLu().inverse().col(j));
        const double dnorm = dir.cwiseAbs().maxCoeff();
        Eigen::Index lead = 0;
        while (lead < q && std::abs(dir(lead)) <= 1e-12 * dnorm) ++lead;
        if (lead == q || dir(lead) >= 0.0) continue;
        collect(j, s);
        if (bps.empty()) continue;
        basis[static_cast<std::size_t>(j)] = bps.front().row;
        refresh();
        moved = true;
        break;
      }
    }
    if (!moved) break;
    ++iterations;
  }
  return basis;
}

/// 2^e with 2^(e-1) <= max|v| < 2^e, or 1 for a zero vector. Scaling by it is exact.
inline double power_of_two_scale(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.cwiseAbs().maxCoeff();
  if (mx == 0.0) return 1.0;
  int e = 0;
  std::frexp(mx, &e);
  return std::ldexp(1.0, e);
}

}  // namespace detail

/// Linear quantile regression: minimizes (1/K) sum pinball_level(y_i - b0 - f_i . w) exactly. The
/// intercept is always fitted; with zero feature columns this is the intercept-only model.
/// Feature columns collinear with the intercept or earlier columns get coefficient 0 and set
/// `degenerate`.
inline LinearQuantileModel fit_linear_quantile(const Eigen::MatrixXd& features,
                                               std::span<const double> targets, double level) {
  detail::check_level(level, "fit_linear_quantile");
  const Eigen::Index k = features.rows();
  const Eigen::Index m = features.cols();
  if (static_cast<Eigen::Index>(targets.size()) != k) {
    throw ValidationError("fit_linear_quantile: " + std::to_string(k) + " feature rows but " +
                          std::to_string(targets.size()) + " targets");
  }
  if (k < m + 2) {
    throw ValidationError("fit_linear_quantile: need K >= m + 2 observations (K=" +
                          std::to_string(k) + ", m=" + std::to_string(m) + ")");
  }
  if (!features.allFinite()) throw ValidationError("fit_linear_quantile: non-finite feature");
  Eigen::VectorXd y(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    y(i) = targets[static_cast<std::size_t>(i)];
    if (!std::isfinite(y(i))) throw ValidationError("fit_linear_quantile: non-finite target");
  }

  Eigen::MatrixXd design(k, m + 1);
  design.col(0).setOnes();
  design.rightCols(m) = features;
  const std::vector<Eigen::Index> cols = detail::independent_columns(design);
  Eigen::MatrixXd reduced(k, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) reduced.col(static_cast<Eigen::Index>(c)) = design.col(cols[c]);

  LinearQuantileModel model;
  model.level = level;
  model.coefs.assign(static_cast<std::size_t>(m), 0.0);
  model.degenerate = static_cast<Eigen::Index>(cols.size()) < m + 1;
  // the vertex walk runs on power-of-two rescaled columns and targets; the coefficients are then
  // recovered in original units from the interpolated rows
  Eigen::MatrixXd scaled = reduced;
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) scaled.col(c) /= detail::power_of_two_scale(reduced.col(c));
  const Eigen::VectorXd ys = y / detail::power_of_two_scale(y);
  const std::vector<Eigen::Index> basis =
      detail::quantile_vertex_descent(scaled, ys, level, model.iterations);
  Eigen::MatrixXd a(reduced.cols(), reduced.cols());
  Eigen::VectorXd ya(reduced.cols());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    a.row(static_cast<Eigen::Index>(j)) = reduced.row(basis[j]);
    ya(static_cast<Eigen::Index>(j)) = y(basis[j]);
  }
  const Eigen::VectorXd b = a.partialPivLu().solve(ya);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const double v = b(static_cast<Eigen::Index>(c));
    if (cols[c] == 0) {
      model.intercept = v;
    } else {
      model.coefs[static_cast<std::size_t>(cols[c] - 1)] = v;
    }
  }
  return model;
}

/// Standard normal quantile: Acklam's rational approximation refined by two Halley steps on erfc.
inline double inv_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("inv_normal_cdf: p must lie in (0, 1), got " + std::to_string(p));
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  // evaluate on the lower half and reflect, so that q(p) = -q(1 - p) holds exactly
  const bool upper = p > 0.5;
  const double pp = upper ? 1.0 - p : p;
  double x = 0.0;
  if (pp < p_low) {
    const double q = std::sqrt(-2.0 * std::log(pp));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = pp - 0.5;
    const double rr = q * q;
    x = (((((a[0] * rr + a[1]) * rr + a[2]) * rr + a[3]) * rr + a[4]) * rr + a[5]) * q /
        (((((b[0] * rr + b[1]) * rr + b[2]) * rr + b[3]) * rr + b[4]) * rr + 1.0);
  }
  for (int step = 0; step < 2; ++step) {
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - pp;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
  }
  if (pp == 0.5) x = 0.0;
  return upper ? -x : x;
}

}  // namespace qfcv
