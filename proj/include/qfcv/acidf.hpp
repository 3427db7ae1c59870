#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qfcv/core.hpp"
#include "qfcv/qfcv.hpp"

namespace qfcv {

/// k = min{s >= 1 : s * delta >= n_te}.
inline std::size_t delay_multiple(std::size_t delta, std::size_t n_te) {
  if (delta == 0 || n_te == 0) throw ValidationError("delay_multiple: delta and n_te must be >= 1");
  return (n_te + delta - 1) / delta;
}

struct AciConfig {
  double alpha = 0.1;
  double gamma = 0.01;
  std::size_t delta = 5;
  std::size_t n_te = 5;
  std::size_t first_origin = 0;  // first origin that issues an interval (rounded up to a multiple of delta)
  std::size_t horizon = 0;       // T: last observed time index

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("AciConfig: alpha must lie in (0, 1)");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
      throw ValidationError("AciConfig: gamma must be finite and >= 0");
    }
    if (delta == 0 || n_te == 0) throw ValidationError("AciConfig: delta and n_te must be >= 1");
    const std::size_t k = delay_multiple(delta, n_te);
    if (horizon < k * delta + delta) {
      throw ValidationError("AciConfig: T=" + std::to_string(horizon) + " must be >= (k+1)*delta=" +
                            std::to_string(k * delta + delta));
    }
  }
};

/// Online state. An interval issued at origin o (a multiple of delta) is built from z_{1:o} and
/// targets the mean loss over o+1..o+n_te; its indicator becomes known at o + n_te and is consumed
/// by the update at time o + k*delta.
struct AciState {
  double theta = 0.0;
  double gamma = 0.01;
  double alpha = 0.1;
  std::size_t delta = 1;
  std::size_t n_te = 1;
  std::size_t k = 1;
  std::size_t t = 0;  // last processed time
  std::map<std::size_t, Interval> pending;  // issued origin -> interval, awaiting feedback

  static AciState init(const AciConfig& c) {
    AciState s;
    s.gamma = c.gamma;
    s.alpha = c.alpha;
    s.delta = c.delta;
    s.n_te = c.n_te;
    s.k = delay_multiple(c.delta, c.n_te);
    return s;
  }
};

struct AciUpdate {
  bool updated = false;
  std::size_t consumed_origin = 0;
  bool covered = false;
  double theta_before = 0.0;
};

/// Advances the state to time t = previous t + 1. When t is a multiple of delta and t > k*delta,
/// the indicator of the interval issued at origin t - k*delta is obtained from
/// `coverage(origin, interval)` and theta += gamma * (1 - alpha - c). Origins that never issued an
/// interval leave theta unchanged.
template <class CoverageFn>
  requires std::predicate<CoverageFn&, std::size_t, const Interval&>
AciUpdate aci_step(AciState& s, std::size_t t, CoverageFn&& coverage) {
  if (t != s.t + 1) {
    throw ValidationError("aci_step: expected time " + std::to_string(s.t + 1) + ", got " +
                          std::to_string(t));
  }
  s.t = t;
  AciUpdate u;
  u.theta_before = s.theta;
  if (t % s.delta != 0 || t <= s.k * s.delta) return u;
  const std::size_t origin = t - s.k * s.delta;
  auto it = s.pending.find(origin);
  if (it == s.pending.end()) return u;
  u.updated = true;
  u.consumed_origin = origin;
  u.covered = coverage(origin, it->second);
  s.theta += s.gamma * (1.0 - s.alpha - (u.covered ? 1.0 : 0.0));
  s.pending.erase(it);
  return u;
}

/// Interval constructor with saturation bounds: build(t, theta) uses z_{1:t} only, and returns the
/// full line for theta > upper_saturation() and the empty set for theta < lower_saturation().
/// realized_error(o) is the mean loss over o+1..o+n_te of the model refit at origin o.
template <class C>
concept PiConstructor = requires(C& c, std::size_t t, double theta) {
  { c.build(t, theta) } -> std::convertible_to<Interval>;
  { c.realized_error(t) } -> std::convertible_to<double>;
  { c.lower_saturation() } -> std::convertible_to<double>;
  { c.upper_saturation() } -> std::convertible_to<double>;
};

struct RollingRecord {
  std::size_t t = 0;  // origin: last observed index when the interval was issued
  Interval interval;
  double theta = 0.0;
  double err_sto = std::numeric_limits<double>::quiet_NaN();
  bool resolved = false;
  bool covered = false;
};

struct RollingRun {
  std::vector<RollingRecord> records;
  double alpha = 0.1;
  double gamma = 0.0;
  std::size_t n_te = 1;
  double theta_min = 0.0;
  double theta_max = 0.0;
  double lower_saturation = 0.0;
  double upper_saturation = 0.0;

  std::size_t resolved_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.resolved ? 1 : 0;
    return n;
  }

  /// sum over resolved intervals of (1 - alpha - c).
  double coverage_deficit_sum() const {
    double s = 0.0;
    for (const auto& r : records) {
      if (r.resolved) s += 1.0 - alpha - (r.covered ? 1.0 : 0.0);
    }
    return s;
  }

  /// theta stays within [m - n_te gamma, M + n_te gamma].
  bool theta_within_bounds() const {
    const double slack = static_cast<double>(n_te) * gamma;
    return theta_min >= lower_saturation - slack && theta_max <= upper_saturation + slack;
  }

  /// |(1/T) sum (1 - alpha - c)| <= (M - m + 3 n_te gamma) / (T gamma), T = resolved intervals.
  bool regret_bound_holds() const {
    const double count = static_cast<double>(resolved_count());
    if (count == 0.0) return true;
    if (gamma == 0.0) return false;
    const double lhs = std::abs(coverage_deficit_sum()) / count;
    const double rhs = (upper_saturation - lower_saturation + 3.0 * static_cast<double>(n_te) * gamma) /
                       (count * gamma);
    return lhs <= rhs;
  }
};

/// Rolling intervals at origins delta, 2 delta, ... (from first_origin, up to T - n_te so every
/// interval is resolved within the horizon).
template <PiConstructor C>
RollingRun run_acidf(C& constructor, const AciConfig& config) {
  config.validate();
  AciState state = AciState::init(config);
  RollingRun run;
  run.alpha = config.alpha;
  run.gamma = config.gamma;
  run.n_te = config.n_te;
  run.lower_saturation = constructor.lower_saturation();
  run.upper_saturation = constructor.upper_saturation();
  std::map<std::size_t, std::size_t> slot;  // origin -> record index

  auto coverage = [&](std::size_t origin, const Interval& iv) {
    RollingRecord& r = run.records[slot.at(origin)];
    r.err_sto = constructor.realized_error(origin);
    r.covered = iv.contains(r.err_sto);
    r.resolved = true;
    return r.covered;
  };

  for (std::size_t t = 1; t <= config.horizon; ++t) {
    aci_step(state, t, coverage);
    run.theta_min = std::min(run.theta_min, state.theta);
    run.theta_max = std::max(run.theta_max, state.theta);
    if (t % config.delta != 0 || t < config.first_origin || t + config.n_te > config.horizon) continue;
    RollingRecord r;
    r.t = t;
    r.theta = state.theta;
    try {
      r.interval = constructor.build(t, state.theta);
    } catch (const NumericalError& e) {
      detail::rethrow_with(e, "step " + std::to_string(t));
    } catch (const ValidationError& e) {
      detail::rethrow_with(e, "step " + std::to_string(t));
    }
    state.pending.emplace(t, r.interval);
    slot.emplace(t, run.records.size());
    run.records.push_back(r);
  }
  return run;
}

/// Fraction of covered intervals among the resolved records of one run.
inline double time_avg_coverage(const RollingRun& run) {
  std::size_t n = 0, c = 0;
  for (const auto& r : run.records) {
    if (!r.resolved) continue;
    ++n;
    c += r.covered ? 1 : 0;
  }
  if (n == 0) throw ValidationError("time_avg_coverage: no resolved intervals");
  return static_cast<double>(c) / static_cast<double>(n);
}

inline double time_avg_coverage(std::span<const bool> covered) {
  if (covered.empty()) throw ValidationError("time_avg_coverage: empty sequence");
  std::size_t c = 0;
  for (bool v : covered) c += v ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(covered.size());
}

/// Coverage at the record index `slot` averaged over runs (instances).
inline double instance_avg_coverage(std::span<const RollingRun> runs, std::size_t slot) {
  if (runs.empty()) throw ValidationError("instance_avg_coverage: no runs");
  std::size_t c = 0;
  for (const auto& run : runs) {
    if (slot >= run.records.size() || !run.records[slot].resolved) {
      throw ValidationError("instance_avg_coverage: record " + std::to_string(slot) +
                            " missing or unresolved");
    }
    c += run.records[slot].covered ? 1 : 0;
  }
  return static_cast<double>(c) / static_cast<double>(runs.size());
}

/// QFCV at effective miscoverage alpha - theta on z_{1:t}. alpha - theta <= 0 gives the full line
/// (M = alpha), alpha - theta >= 1 the empty set (m = alpha - 1). Before enough history exists for a
/// fit, the full line is returned and `warmup_count` incremented.
template <Forecaster F>
class AqfcvConstructor {
 public:
  AqfcvConstructor(const TimeSeries& series, F forecaster, Loss loss, QfcvConfig config)
      : engine_(series, std::move(forecaster), std::move(loss), config.n_tr, config.n_val,
                config.n_te, config.spacing, config.scheme),
        config_(config) {
    config_.validate();
  }

  double lower_saturation() const { return config_.alpha - 1.0; }
  double upper_saturation() const { return config_.alpha; }
  std::size_t warmup_count() const { return warmups_; }
  FoldEngine<F>& engine() { return engine_; }

  /// Smallest t with enough folds for a QFCV fit.
  std::size_t min_history() const {
    const std::size_t m = std::max<std::size_t>(config_.aux.m, 1);
    const std::size_t min_k = m * config_.memory_span + config_.memory_span + 1;
    return config_.n_tr + config_.n_val + config_.n_te + (min_k - 1) * config_.spacing;
  }

  Interval build(std::size_t t, double theta) {
    const double a = config_.alpha - theta;
    // levels a/2 and 1 - a/2 must be representable inside (0, 1)
    if (a <= 0.0 || 1.0 - a / 2.0 >= 1.0) return Interval::full();
    if (a >= 1.0) return Interval::empty();
    if (t < min_history()) {
      ++warmups_;
      return Interval::full();
    }
    const FoldLayout layout = engine_.layout(t);
    const ErrPairs ep = compute_err_pairs(engine_, layout, config_.aux);
    return qfcv_fit(ep.pairs, ep.star_val, a, config_.memory_span, engine_.loss().nonnegative())
        .interval;
  }

  double realized_error(std::size_t origin) {
    const std::size_t n_tr = config_.n_tr;
    if (origin < n_tr) {
      throw ValidationError("realized_error: origin " + std::to_string(origin) +
                            " precedes a full training window");
    }
    const IndexRange train = config_.scheme == WindowScheme::rolling
                                 ? IndexRange{origin - n_tr + 1, origin}
                                 : IndexRange{1, origin};
    return mean_window_loss(engine_.series(), engine_.model(train),
                            IndexRange{origin + 1, origin + config_.n_te}, engine_.loss());
  }

 private:
  FoldEngine<F> engine_;
  QfcvConfig config_;
  std::size_t warmups_ = 0;
};

}  // namespace qfcv
