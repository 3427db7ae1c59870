#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qfcv/core.hpp"
#include "qfcv/quantreg.hpp"

namespace qfcv {

/// Number of auxiliary features; m = 0 is the constant feature.
struct AuxSpec {
  std::size_t m = 1;
};

struct ErrPair {
  std::vector<double> err_val;
  double err_test = 0.0;
};

struct QfcvConfig {
  double alpha = 0.1;
  AuxSpec aux;
  std::size_t memory_span = 1;
  WindowScheme scheme = WindowScheme::rolling;
  std::size_t n_tr = 40;
  std::size_t n_val = 5;
  std::size_t n_te = 5;
  std::size_t spacing = 5;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw ValidationError("QfcvConfig: alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
    if (memory_span < 1) throw ValidationError("QfcvConfig: memory_span must be >= 1");
    if (aux.m > n_val) {
      throw ValidationError("QfcvConfig: aux m=" + std::to_string(aux.m) + " exceeds n_val=" +
                            std::to_string(n_val));
    }
  }
};

struct QfcvOutput {
  IntervalRecord interval;
  double point = 0.0;
  LinearQuantileModel lo_model;
  LinearQuantileModel hi_model;
  std::vector<ErrPair> pairs;
  std::vector<double> star_val;
};

/// Splits `val` into m contiguous blocks; the first (size mod m) blocks get one extra index.
inline std::vector<IndexRange> aux_blocks(IndexRange val, std::size_t m) {
  if (m > val.size()) {
    throw ValidationError("aux_blocks: m=" + std::to_string(m) + " exceeds n_val=" +
                          std::to_string(val.size()));
  }
  std::vector<IndexRange> blocks;
  if (m == 0) return blocks;
  const std::size_t base = val.size() / m;
  const std::size_t extra = val.size() % m;
  std::size_t first = val.first;
  for (std::size_t b = 0; b < m; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    blocks.push_back({first, first + len - 1});
    first += len;
  }
  return blocks;
}

/// Block means of per-index validation losses; m = 0 gives the constant feature (1).
inline std::vector<double> aux_from_losses(std::span<const double> val_losses, std::size_t m) {
  if (m == 0) return {1.0};
  const auto blocks = aux_blocks({1, val_losses.size()}, m);
  std::vector<double> out;
  out.reserve(m);
  for (const IndexRange& b : blocks) {
    double s = 0.0;
    for (std::size_t t = b.first; t <= b.last; ++t) s += val_losses[t - 1];
    out.push_back(s / static_cast<double>(b.size()));
  }
  return out;
}

/// Per-index losses on `val` of a model whose training window ends at val.first - 1.
template <FittedModel M>
std::vector<double> window_losses(const TimeSeries& series, const M& model, IndexRange val,
                                  const Loss& loss) {
  std::vector<double> out;
  out.reserve(val.size());
  for (std::size_t t = val.first; t <= val.last; ++t) {
    const TimePoint& z = series.at(t);
    out.push_back(loss(model.predict(z, t - val.first + 1), z.y));
  }
  return out;
}

/// A_m(train, val): fits on `train` and returns block-mean validation losses on `val`.
template <Forecaster F>
std::vector<double> aux_features(std::span<const TimePoint> train, std::span<const TimePoint> val,
                                 const F& forecaster, const Loss& loss, std::size_t m) {
  if (m > val.size()) {
    throw ValidationError("aux_features: m=" + std::to_string(m) + " exceeds n_val=" +
                          std::to_string(val.size()));
  }
  const auto model = forecaster.fit(train);
  std::vector<double> losses;
  losses.reserve(val.size());
  for (std::size_t h = 0; h < val.size(); ++h) {
    losses.push_back(loss(model.predict(val[h], h + 1), val[h].y));
  }
  return aux_from_losses(losses, m);
}

namespace detail {
template <class E>
[[noreturn]] void rethrow_with(const E& e, const std::string& context) {
  throw E(context + ": " + e.what());
}
}  // namespace detail

/// Per-fold losses for a fixed window geometry. Fold windows depend only on the fold index, not on
/// n, so one engine serves every prefix length of a growing series. Fits are memoized by training
/// window; D_{i*} of a rolling fold is usually the D window of a later fold.
template <Forecaster F>
class FoldEngine {
 public:
  using Model = ModelOf<F>;

  struct FoldLosses {
    std::vector<double> val_losses;  // per index of V_i, model fit on D_i
    double test_error = 0.0;         // mean loss on T_i, model fit on D_{i*}
  };

  FoldEngine(const TimeSeries& series, F forecaster, Loss loss, std::size_t n_tr, std::size_t n_val,
             std::size_t n_te, std::size_t spacing, WindowScheme scheme = WindowScheme::rolling)
      : series_(&series),
        forecaster_(std::move(forecaster)),
        loss_(std::move(loss)),
        n_tr_(n_tr),
        n_val_(n_val),
        n_te_(n_te),
        spacing_(spacing),
        scheme_(scheme) {}

  const TimeSeries& series() const { return *series_; }
  const Loss& loss() const { return loss_; }
  const F& forecaster() const { return forecaster_; }

  FoldLayout layout(std::size_t n) const {
    return build_fold_layout(n, n_tr_, n_val_, n_te_, spacing_, scheme_);
  }

  const Model& model(IndexRange train) {
    auto it = models_.find(train);
    if (it == models_.end()) {
      it = models_.emplace(train, forecaster_.fit(series_->window(train.first, train.last))).first;
    }
    return it->second;
  }

  /// Fold i (1-based) of `layout`.
  const FoldLosses& fold(const FoldLayout& layout, std::size_t i) {
    if (i < 1 || i > layout.fold_count()) {
      throw ValidationError("FoldEngine: fold " + std::to_string(i) + " outside [1, " +
                            std::to_string(layout.fold_count()) + "]");
    }
    if (folds_.size() >= i && folds_[i - 1]) return *folds_[i - 1];
    const FoldWindows& w = layout.folds[i - 1];
    FoldLosses f;
    try {
      f.val_losses = window_losses(*series_, model(w.train), w.val, loss_);
      f.test_error = mean_window_loss(*series_, model(w.train_star), w.test, loss_);
    } catch (const NumericalError& e) {
      detail::rethrow_with(e, "fold " + std::to_string(i));
    } catch (const ValidationError& e) {
      detail::rethrow_with(e, "fold " + std::to_string(i));
    }
    if (folds_.size() < i) folds_.resize(i);
    folds_[i - 1] = std::move(f);
    return *folds_[i - 1];
  }

  /// Per-index losses of the star validation window V, model fit on D.
  std::vector<double> star_val_losses(const FoldLayout& layout) {
    try {
      return window_losses(*series_, model(layout.star.train), layout.star.val, loss_);
    } catch (const NumericalError& e) {
      detail::rethrow_with(e, "star window");
    } catch (const ValidationError& e) {
      detail::rethrow_with(e, "star window");
    }
  }

  /// Err_sto for the layout: model fit on D*, mean loss on T. The series must extend through T.
  double stochastic_error(const FoldLayout& layout) {
    return stochastic_test_error(*series_, model(layout.star.train_star), layout, loss_);
  }

  /// Drops memoized fits whose training window ends before `t`; fold losses are kept.
  void evict_models_before(std::size_t t) {
    for (auto it = models_.begin(); it != models_.end();) {
      it = it->first.last < t ? models_.erase(it) : std::next(it);
    }
  }

 private:
  const TimeSeries* series_;
  F forecaster_;
  Loss loss_;
  std::size_t n_tr_, n_val_, n_te_, spacing_;
  WindowScheme scheme_;
  std::map<IndexRange, Model> models_;
  std::vector<std::optional<FoldLosses>> folds_;
};

struct ErrPairs {
  std::vector<ErrPair> pairs;
  std::vector<double> star_val;
};

template <Forecaster F>
ErrPairs compute_err_pairs(FoldEngine<F>& engine, const FoldLayout& layout, AuxSpec aux) {
  ErrPairs out;
  out.pairs.reserve(layout.fold_count());
  for (std::size_t i = 1; i <= layout.fold_count(); ++i) {
    const auto& f = engine.fold(layout, i);
    out.pairs.push_back({aux_from_losses(f.val_losses, aux.m), f.test_error});
  }
  out.star_val = aux_from_losses(engine.star_val_losses(layout), aux.m);
  return out;
}

/// The K error tuples (Err_i^val, Err_i^test) and Err_*^val, computed from z_{1:n} only.
template <Forecaster F>
ErrPairs compute_err_pairs(const TimeSeries& series, const FoldLayout& layout, const F& forecaster,
                           const Loss& loss, AuxSpec aux) {
  if (aux.m > layout.n_val) {
    throw ValidationError("compute_err_pairs: aux m=" + std::to_string(aux.m) + " exceeds n_val=" +
                          std::to_string(layout.n_val));
  }
  if (series.size() < layout.n) {
    throw ValidationError("compute_err_pairs: series has " + std::to_string(series.size()) +
                          " points, layout needs n=" + std::to_string(layout.n));
  }
  FoldEngine<F> engine(series, forecaster, loss, layout.n_tr, layout.n_val, layout.n_te,
                       layout.spacing, layout.scheme);
  return compute_err_pairs(engine, layout, aux);
}

namespace detail {

struct StackedDesign {
  Eigen::MatrixXd features;
  std::vector<double> targets;
  std::vector<double> star;
};

/// Rows i = span..K carry (Err_i^val, ..., Err_{i-span+1}^val); the star feature is
/// (Err_*^val, Err_K^val, ..., Err_{K-span+2}^val).
inline StackedDesign stack_pairs(const std::vector<ErrPair>& pairs,
                                 const std::vector<double>& star_val, std::size_t span) {
  if (span < 1) throw ValidationError("qfcv: memory_span must be >= 1");
  const std::size_t k = pairs.size();
  const std::size_t m = star_val.size();
  for (const ErrPair& p : pairs) {
    if (p.err_val.size() != m) {
      throw ValidationError("qfcv: err_val dimension " + std::to_string(p.err_val.size()) +
                            " differs from star dimension " + std::to_string(m));
    }
  }
  const std::size_t min_k = m * span + span + 1;
  if (k < min_k) {
    throw ValidationError("qfcv: " + std::to_string(k) + " folds, need at least K=" +
                          std::to_string(min_k) + " for feature dimension " + std::to_string(m) +
                          " and memory span " + std::to_string(span));
  }
  StackedDesign d;
  const std::size_t rows = k - span + 1;
  d.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(m * span));
  d.targets.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = r + span - 1;  // 0-based fold index
    for (std::size_t lag = 0; lag < span; ++lag) {
      for (std::size_t j = 0; j < m; ++j) {
        d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(lag * m + j)) =
            pairs[i - lag].err_val[j];
      }
    }
    d.targets.push_back(pairs[i].err_test);
  }
  d.star = star_val;
  for (std::size_t lag = 1; lag < span; ++lag) {
    const auto& v = pairs[k - lag].err_val;
    d.star.insert(d.star.end(), v.begin(), v.end());
  }
  return d;
}

}  // namespace detail

struct QfcvFit {
  Interval interval;
  LinearQuantileModel lo_model;
  LinearQuantileModel hi_model;
};

/// Fits levels alpha/2 and 1 - alpha/2 and evaluates both at the star feature. Crossed endpoints are
/// swapped; for nonnegative losses lo is clamped at 0.
inline QfcvFit qfcv_fit(const std::vector<ErrPair>& pairs, const std::vector<double>& star_val,
                        double alpha, std::size_t memory_span = 1, bool nonnegative = true) {
  detail::check_level(alpha, "qfcv_interval");
  const detail::StackedDesign d = detail::stack_pairs(pairs, star_val, memory_span);
  QfcvFit out;
  out.lo_model = fit_linear_quantile(d.features, d.targets, alpha / 2.0);
  out.hi_model = fit_linear_quantile(d.features, d.targets, 1.0 - alpha / 2.0);
  double lo = out.lo_model.predict(d.star);
  double hi = out.hi_model.predict(d.star);
  if (lo > hi) std::swap(lo, hi);
  if (nonnegative) {
    lo = std::max(lo, 0.0);
    hi = std::max(hi, lo);
  }
  out.interval = {lo, hi};
  return out;
}

inline IntervalRecord qfcv_interval(const std::vector<ErrPair>& pairs,
                                    const std::vector<double>& star_val, double alpha,
                                    std::size_t memory_span = 1, bool nonnegative = true) {
  const QfcvFit f = qfcv_fit(pairs, star_val, alpha, memory_span, nonnegative);
  return {f.interval, "qfcv", 1.0 - alpha, 0};
}

/// Least-squares affine regression of err_test on err_val, evaluated at star_val.
inline double qfcv_point(const std::vector<ErrPair>& pairs, const std::vector<double>& star_val) {
  const std::size_t m = star_val.size();
  const std::size_t k = pairs.size();
  if (k < m + 2) {
    throw ValidationError("qfcv_point: " + std::to_string(k) + " folds, need at least " +
                          std::to_string(m + 2));
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m + 1));
  Eigen::VectorXd y(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (pairs[i].err_val.size() != m) {
      throw ValidationError("qfcv_point: err_val dimension mismatch at fold " + std::to_string(i + 1));
    }
    x(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = pairs[i].err_val[j];
    }
    y(static_cast<Eigen::Index>(i)) = pairs[i].err_test;
  }
  const Eigen::VectorXd b = x.colPivHouseholderQr().solve(y);
  double v = b(0);
  for (std::size_t j = 0; j < m; ++j) v += b(static_cast<Eigen::Index>(j + 1)) * star_val[j];
  return v;
}

/// Algorithm end to end on z_{1:n} where n = config layout length.
template <Forecaster F>
QfcvOutput run_qfcv(FoldEngine<F>& engine, std::size_t n, const QfcvConfig& config) {
  config.validate();
  const FoldLayout layout = engine.layout(n);
  QfcvOutput out;
  ErrPairs ep = compute_err_pairs(engine, layout, config.aux);
  const QfcvFit fit = qfcv_fit(ep.pairs, ep.star_val, config.alpha, config.memory_span,
                               engine.loss().nonnegative());
  out.interval = {fit.interval, "qfcv", 1.0 - config.alpha, n};
  out.lo_model = fit.lo_model;
  out.hi_model = fit.hi_model;
  out.point = qfcv_point(ep.pairs, ep.star_val);
  out.pairs = std::move(ep.pairs);
  out.star_val = std::move(ep.star_val);
  return out;
}

template <Forecaster F>
QfcvOutput run_qfcv(const TimeSeries& series, std::size_t n, const F& forecaster, const Loss& loss,
                    const QfcvConfig& config) {
  FoldEngine<F> engine(series, forecaster, loss, config.n_tr, config.n_val, config.n_te,
                       config.spacing, config.scheme);
  return run_qfcv(engine, n, config);
}

}  // namespace qfcv
