#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qfcv {

/// Raised for malformed inputs and violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine fails (non-convergence, singular system).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimePoint {
  std::vector<double> x;
  double y = 0.0;
};

/// Ordered stream z_1, ..., z_n. Public indexing is 1-based.
class TimeSeries {
 public:
  TimeSeries() = default;

  explicit TimeSeries(std::vector<TimePoint> points) : points_(std::move(points)) {
    if (points_.empty()) throw ValidationError("TimeSeries: empty series");
    dim_ = points_.front().x.size();
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& z = points_[i];
      if (z.x.size() != dim_) {
        throw ValidationError("TimeSeries: point " + std::to_string(i + 1) + " has dimension " +
                              std::to_string(z.x.size()) + ", expected " + std::to_string(dim_));
      }
      if (!std::isfinite(z.y)) {
        throw ValidationError("TimeSeries: non-finite outcome at t=" + std::to_string(i + 1));
      }
      for (double v : z.x) {
        if (!std::isfinite(v)) {
          throw ValidationError("TimeSeries: non-finite feature at t=" + std::to_string(i + 1));
        }
      }
    }
  }

  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return dim_; }

  const TimePoint& at(std::size_t t) const {
    if (t < 1 || t > points_.size()) {
      throw ValidationError("TimeSeries: index " + std::to_string(t) + " outside [1, " +
                            std::to_string(points_.size()) + "]");
    }
    return points_[t - 1];
  }

  /// Points z_first..z_last (inclusive, 1-based).
  std::span<const TimePoint> window(std::size_t first, std::size_t last) const {
    if (first < 1 || last < first || last > points_.size()) {
      throw ValidationError("TimeSeries: window [" + std::to_string(first) + ", " +
                            std::to_string(last) + "] outside series of length " +
                            std::to_string(points_.size()));
    }
    return std::span<const TimePoint>(points_).subspan(first - 1, last - first + 1);
  }

  /// First t points as their own series.
  TimeSeries prefix(std::size_t t) const {
    auto w = window(1, t);
    return TimeSeries(std::vector<TimePoint>(w.begin(), w.end()));
  }

  std::span<const TimePoint> points() const { return points_; }

 private:
  std::vector<TimePoint> points_;
  std::size_t dim_ = 0;
};

enum class LossKind { squared, absolute, plugin };

/// Regression loss l(prediction, outcome).
class Loss {
 public:
  Loss() = default;

  static Loss squared() { return Loss(LossKind::squared, {}, true); }
  static Loss absolute() { return Loss(LossKind::absolute, {}, true); }

  /// User loss. `nonnegative` lets interval constructors clamp at zero.
  static Loss plugin(std::function<double(double, double)> fn, bool nonnegative = true) {
    if (!fn) throw ValidationError("Loss: empty plugin function");
    return Loss(LossKind::plugin, std::move(fn), nonnegative);
  }

  double operator()(double prediction, double outcome) const {
    switch (kind_) {
      case LossKind::squared: {
        const double d = prediction - outcome;
        return d * d;
      }
      case LossKind::absolute:
        return std::abs(prediction - outcome);
      case LossKind::plugin:
        return fn_(prediction, outcome);
    }
    return 0.0;
  }

  LossKind kind() const { return kind_; }
  bool nonnegative() const { return nonnegative_; }

 private:
  Loss(LossKind kind, std::function<double(double, double)> fn, bool nonneg)
      : kind_(kind), fn_(std::move(fn)), nonnegative_(nonneg) {}

  LossKind kind_ = LossKind::squared;
  std::function<double(double, double)> fn_;
  bool nonnegative_ = true;
};

/// Contiguous, inclusive, 1-based index set {first, ..., last}.
struct IndexRange {
  std::size_t first = 1;
  std::size_t last = 0;

  std::size_t size() const { return last >= first ? last - first + 1 : 0; }
  bool contains(std::size_t t) const { return t >= first && t <= last; }
  IndexRange shifted(std::size_t by) const { return {first + by, last + by}; }

  friend bool operator==(const IndexRange&, const IndexRange&) = default;
  friend auto operator<=>(const IndexRange&, const IndexRange&) = default;
};

enum class WindowScheme { rolling, expanding };

inline std::string to_string(WindowScheme s) {
  return s == WindowScheme::rolling ? "rolling" : "expanding";
}

/// Train / validation / refit / test windows of a single fold (or of the star fold).
struct FoldWindows {
  IndexRange train;       // D_i
  IndexRange val;         // V_i
  IndexRange train_star;  // D_{i*}
  IndexRange test;        // T_i
};

struct FoldLayout {
  std::size_t n = 0;
  std::size_t n_tr = 0;
  std::size_t n_val = 0;
  std::size_t n_te = 0;
  std::size_t spacing = 1;  // fold shift Delta
  WindowScheme scheme = WindowScheme::rolling;
  std::vector<FoldWindows> folds;
  FoldWindows star;  // D, V, D*, T

  std::size_t fold_count() const { return folds.size(); }
};

/// K = floor((n - n_tr - n_val - n_te) / spacing) + 1 folds. T_i starts right after V_i so every
/// fold mirrors the star layout, where T = {n+1, ..., n+n_te}.
inline FoldLayout build_fold_layout(std::size_t n, std::size_t n_tr, std::size_t n_val,
                                    std::size_t n_te, std::size_t spacing,
                                    WindowScheme scheme = WindowScheme::rolling) {
  if (n_tr == 0 || n_val == 0 || n_te == 0) {
    throw ValidationError("build_fold_layout: n_tr, n_val and n_te must be positive (got " +
                          std::to_string(n_tr) + ", " + std::to_string(n_val) + ", " +
                          std::to_string(n_te) + ")");
  }
  if (spacing == 0) throw ValidationError("build_fold_layout: spacing must be >= 1");
  if (n < n_tr + n_val + n_te) {
    throw ValidationError("build_fold_layout: n=" + std::to_string(n) +
                          " is smaller than n_tr + n_val + n_te = " +
                          std::to_string(n_tr + n_val + n_te));
  }

  FoldLayout layout;
  layout.n = n;
  layout.n_tr = n_tr;
  layout.n_val = n_val;
  layout.n_te = n_te;
  layout.spacing = spacing;
  layout.scheme = scheme;

  const std::size_t k = (n - n_tr - n_val - n_te) / spacing + 1;
  layout.folds.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t off = i * spacing;
    FoldWindows f;
    f.val = {off + n_tr + 1, off + n_tr + n_val};
    f.test = {off + n_tr + n_val + 1, off + n_tr + n_val + n_te};
    if (scheme == WindowScheme::rolling) {
      f.train = {off + 1, off + n_tr};
      f.train_star = {off + n_val + 1, off + n_tr + n_val};
    } else {
      f.train = {1, off + n_tr};
      f.train_star = {1, off + n_tr + n_val};
    }
    layout.folds.push_back(f);
  }

  FoldWindows& s = layout.star;
  s.val = {n - n_val + 1, n};
  s.test = {n + 1, n + n_te};
  if (scheme == WindowScheme::rolling) {
    s.train = {n - n_tr - n_val + 1, n - n_val};
    s.train_star = {n - n_tr + 1, n};
  } else {
    s.train = {1, n - n_val};
    s.train_star = {1, n};
  }
  return layout;
}

/// A fitted model predicts the outcome of a point `horizon` steps after the end of its training
/// window (horizon >= 1). Cross-sectional models ignore the horizon.
template <class M>
concept FittedModel = requires(const M& m, const TimePoint& z, std::size_t h) {
  { m.predict(z, h) } -> std::convertible_to<double>;
};

template <class F>
concept Forecaster = requires(const F& f, std::span<const TimePoint> w) {
  { f.fit(w) } -> FittedModel;
};

template <Forecaster F>
using ModelOf = decltype(std::declval<const F&>().fit(std::span<const TimePoint>{}));

/// Mean loss of `model` over the points in `window`; the model's training window is assumed to end
/// at window.first - 1.
template <FittedModel M>
double mean_window_loss(const TimeSeries& series, const M& model, IndexRange window,
                        const Loss& loss) {
  if (window.size() == 0) throw ValidationError("mean_window_loss: empty window");
  double total = 0.0;
  for (std::size_t t = window.first; t <= window.last; ++t) {
    const TimePoint& z = series.at(t);
    total += loss(model.predict(z, t - window.first + 1), z.y);
  }
  return total / static_cast<double>(window.size());
}

/// Err_sto: average loss over the star test window T = {n+1, ..., n+n_te} of a model fitted on D*.
/// `series` must extend through n + n_te.
template <FittedModel M>
double stochastic_test_error(const TimeSeries& series, const M& model, const FoldLayout& layout,
                             const Loss& loss) {
  if (series.size() < layout.star.test.last) {
    throw ValidationError("stochastic_test_error: series has " + std::to_string(series.size()) +
                          " points but the test window ends at " +
                          std::to_string(layout.star.test.last));
  }
  return mean_window_loss(series, model, layout.star.test, loss);
}

/// An interval on the real line. The full line is (-inf, inf); the empty set is lo=+inf, hi=-inf.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval full() {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  static Interval empty() {
    return {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  }

  bool is_empty() const { return lo > hi; }
  bool is_full() const { return std::isinf(lo) && lo < 0 && std::isinf(hi) && hi > 0; }
  bool contains(double v) const { return lo <= v && v <= hi; }
  double length() const { return is_empty() ? 0.0 : hi - lo; }
};

/// An interval produced by one of the methods, tagged for reporting.
struct IntervalRecord {
  Interval interval;
  std::string method;
  double nominal_level = 0.9;  // 1 - alpha
  std::size_t time_index = 0;  // last observed index n (or the rolling origin)
};

}  // namespace qfcv
