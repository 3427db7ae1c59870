#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "qfcv/core.hpp"
#include "qfcv/fcv.hpp"
#include "qfcv/forecasters.hpp"
#include "qfcv/qfcv.hpp"
#include "qfcv/quantreg.hpp"
#include "qfcv/sim.hpp"

namespace qfcv {

/// Runs fn(i) for i in [0, count) on `threads` workers. Each index writes only its own slot, so
/// results do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct ForecasterSpec {
  enum class Kind { lasso, ridge };
  Kind kind = Kind::lasso;
  std::optional<double> lambda;  // lasso: absolute penalty (default lambda_fraction * lambda_max)
  double lambda_fraction = 0.1;
  double ridge_lambda = 1.0;
  bool include_intercept = true;
};

using LinearForecaster = std::variant<LassoForecaster, RidgeForecaster>;

inline LinearForecaster make_forecaster(const ForecasterSpec& s) {
  if (s.kind == ForecasterSpec::Kind::ridge) {
    return RidgeForecaster{RidgeSpec{s.ridge_lambda, s.include_intercept}};
  }
  LassoSpec l;
  l.lambda = s.lambda;
  l.lambda_fraction = s.lambda_fraction;
  l.include_intercept = s.include_intercept;
  return LassoForecaster{l};
}

struct MethodSpec {
  enum class Kind { qfcv, fcv, oracle };
  std::string name;
  Kind kind = Kind::qfcv;
  AuxSpec aux;                  // qfcv
  std::size_t memory_span = 1;  // qfcv
  FcvConfig fcv;                // fcv; alpha is taken from the experiment

  static MethodSpec qfcv_m(std::size_t m, std::size_t span = 1) {
    MethodSpec s;
    s.kind = Kind::qfcv;
    s.aux.m = m;
    s.memory_span = span;
    s.name = "qfcv" + std::to_string(m) + (span > 1 ? "_span" + std::to_string(span) : "");
    return s;
  }
  static MethodSpec fcv_variant(FcvVariant v) {
    MethodSpec s;
    s.kind = Kind::fcv;
    s.fcv.variant = v;
    s.name = to_string(v);
    return s;
  }
  static MethodSpec oracle() {
    MethodSpec s;
    s.kind = Kind::oracle;
    s.name = "oracle";
    return s;
  }
};

struct ExperimentSpec {
  SimSpec sim;  // sim.n is the observed length; each replication also draws n_te future points
  std::size_t n_tr = 40;
  std::size_t n_val = 5;
  std::size_t n_te = 5;
  std::size_t spacing = 5;
  WindowScheme scheme = WindowScheme::rolling;
  double alpha = 0.1;
  ForecasterSpec forecaster;
  std::vector<MethodSpec> methods;
  std::size_t replications = 500;
  std::uint64_t seed = 0;
  std::size_t oracle_draws = 2000;
  std::vector<double> phi_grid;  // sweep over the AR coefficient; empty means a single run
  std::size_t threads = 1;

  void validate() const {
    if (replications < 1) throw ValidationError("ExperimentSpec: replications must be >= 1");
    if (oracle_draws < 100) throw ValidationError("ExperimentSpec: oracle_draws must be >= 100");
    if (methods.empty()) throw ValidationError("ExperimentSpec: no methods");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("ExperimentSpec: alpha must lie in (0, 1)");
    build_fold_layout(sim.n, n_tr, n_val, n_te, spacing, scheme);
  }
};

struct OracleQuantiles {
  double q05 = 0.0;
  double q95 = 0.0;
  double mc_err = 0.0;     // Monte-Carlo estimate of Err
  double mc_err_se = 0.0;  // its standard error
  std::size_t draws = 0;
};

/// Stream ids >= this offset are reserved for oracle draws, disjoint from replication ids.
inline constexpr std::uint64_t oracle_stream_offset = std::uint64_t{1} << 40;

inline SimSpec replication_sim(const SimSpec& base, std::size_t n_total, std::uint64_t seed,
                               std::uint64_t stream) {
  SimSpec s = base;
  s.n = n_total;
  s.seed = seed;
  s.stream = stream;
  return s;
}

/// Err_sto of the model fit on the last n_tr observed points, over the n_te points that follow.
template <Forecaster F>
double simulate_err_sto(const SimSpec& sim, std::size_t n, std::size_t n_tr, std::size_t n_te,
                        const F& forecaster, const Loss& loss, WindowScheme scheme) {
  const TimeSeries s = simulate_linear(replication_sim(sim, n + n_te, sim.seed, sim.stream));
  const IndexRange train = scheme == WindowScheme::rolling ? IndexRange{n - n_tr + 1, n}
                                                           : IndexRange{1, n};
  const auto model = forecaster.fit(s.window(train.first, train.last));
  return mean_window_loss(s, model, {n + 1, n + n_te}, loss);
}

/// Distribution of Err_sto over `draws` independent series (streams offset + first_stream + d):
/// lower empirical 5% / 95% quantiles and the mean.
template <Forecaster F>
OracleQuantiles oracle_quantiles(const SimSpec& sim, std::size_t n_tr, std::size_t n_te,
                                 const F& forecaster, const Loss& loss, std::size_t draws,
                                 std::uint64_t seed, WindowScheme scheme = WindowScheme::rolling,
                                 std::size_t threads = 1, std::uint64_t first_stream = 0) {
  if (draws < 100) throw ValidationError("oracle_quantiles: draws must be >= 100");
  if (sim.n < n_tr) throw ValidationError("oracle_quantiles: n must be >= n_tr");
  std::vector<double> errs(draws);
  parallel_for(draws, threads, [&](std::size_t d) {
    SimSpec s = sim;
    s.seed = seed;
    s.stream = oracle_stream_offset + first_stream + d;
    errs[d] = simulate_err_sto(s, sim.n, n_tr, n_te, forecaster, loss, scheme);
  });
  OracleQuantiles q;
  q.draws = draws;
  q.q05 = empirical_quantile(errs, 0.05);
  q.q95 = empirical_quantile(errs, 0.95);
  double sum = 0.0, sq = 0.0;
  for (double e : errs) sum += e;
  q.mc_err = sum / static_cast<double>(draws);
  for (double e : errs) sq += (e - q.mc_err) * (e - q.mc_err);
  q.mc_err_se = std::sqrt(sq / static_cast<double>(draws - 1) / static_cast<double>(draws));
  return q;
}

inline double mse_point(std::span<const double> estimates, std::span<const double> realized) {
  if (estimates.size() != realized.size()) {
    throw ValidationError("mse_point: " + std::to_string(estimates.size()) + " estimates but " +
                          std::to_string(realized.size()) + " realized values");
  }
  if (estimates.empty()) throw ValidationError("mse_point: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - realized[i];
    s += d * d;
  }
  return s / static_cast<double>(estimates.size());
}

/// One method's result on one replication.
struct MethodOutcome {
  bool ok = false;
  std::string error;
  Interval interval;
  double point = 0.0;
};

struct ReplicationRecord {
  std::size_t replication = 0;
  double sweep_value = 0.0;
  double err_sto = 0.0;
  std::vector<MethodOutcome> outcomes;  // aligned with ExperimentSpec::methods
};

struct MetricRow {
  std::string method;
  double sweep_value = 0.0;
  std::size_t replications = 0;  // successful ones
  std::size_t failures = 0;
  double coverage_sto = 0.0, coverage_sto_se = 0.0;
  double coverage_err = 0.0, coverage_err_se = 0.0;
  double miscover_hi = 0.0, miscover_hi_se = 0.0;
  double miscover_lo = 0.0, miscover_lo_se = 0.0;
  double mean_length = 0.0, mean_length_se = 0.0;
  double length_ratio = 0.0, length_ratio_se = 0.0;
  double mse_point = 0.0, mse_point_se = 0.0;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<OracleQuantiles> oracles;  // one per sweep value
  std::vector<ReplicationRecord> records;
  std::size_t failures = 0;
};

namespace detail {

template <Forecaster F>
MethodOutcome run_method(const MethodSpec& m, FoldEngine<F>& engine, const FoldLayout& layout,
                         double alpha, const OracleQuantiles& oracle) {
  MethodOutcome o;
  try {
    switch (m.kind) {
      case MethodSpec::Kind::qfcv: {
        const ErrPairs ep = compute_err_pairs(engine, layout, m.aux);
        o.interval = qfcv_fit(ep.pairs, ep.star_val, alpha, m.memory_span,
                              engine.loss().nonnegative())
                         .interval;
        o.point = qfcv_point(ep.pairs, ep.star_val);
        break;
      }
      case MethodSpec::Kind::fcv: {
        const std::vector<double> e = fold_validation_errors(engine, layout);
        FcvConfig c = m.fcv;
        c.alpha = alpha;
        o.interval = fcv_interval(e, c).interval;
        o.point = fcv_point(e);
        break;
      }
      case MethodSpec::Kind::oracle:
        o.interval = {oracle.q05, oracle.q95};
        o.point = oracle.mc_err;
        break;
    }
    o.ok = true;
  } catch (const std::exception& e) {
    o.ok = false;
    o.error = e.what();
  }
  return o;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline double binomial_se(double p, std::size_t n) {
  return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace detail

/// Aggregates the replication records of one method and sweep value.
inline MetricRow summarize(const std::string& method, std::size_t method_index, double sweep_value,
                           const std::vector<ReplicationRecord>& records,
                           const OracleQuantiles& oracle) {
  MetricRow row;
  row.method = method;
  row.sweep_value = sweep_value;
  std::size_t hi = 0, lo = 0, cov_err = 0;
  std::vector<double> lengths, sq_errors;
  for (const ReplicationRecord& r : records) {
    const MethodOutcome& o = r.outcomes[method_index];
    if (!o.ok) {
      ++row.failures;
      continue;
    }
    ++row.replications;
    if (r.err_sto > o.interval.hi) {
      ++hi;
    } else if (r.err_sto < o.interval.lo) {
      ++lo;
    }
    cov_err += o.interval.contains(oracle.mc_err) ? 1 : 0;
    lengths.push_back(o.interval.length());
    sq_errors.push_back((o.point - r.err_sto) * (o.point - r.err_sto));
  }
  const std::size_t n = row.replications;
  if (n == 0) return row;
  const double dn = static_cast<double>(n);
  row.miscover_hi = static_cast<double>(hi) / dn;
  row.miscover_lo = static_cast<double>(lo) / dn;
  row.coverage_sto = static_cast<double>(n - hi - lo) / dn;
  row.coverage_err = static_cast<double>(cov_err) / dn;
  row.coverage_sto_se = detail::binomial_se(row.coverage_sto, n);
  row.coverage_err_se = detail::binomial_se(row.coverage_err, n);
  row.miscover_hi_se = detail::binomial_se(row.miscover_hi, n);
  row.miscover_lo_se = detail::binomial_se(row.miscover_lo, n);
  row.mean_length = detail::mean_of(lengths);
  row.mean_length_se = detail::se_of(lengths);
  const double oracle_len = oracle.q95 - oracle.q05;
  if (oracle_len > 0.0) {
    row.length_ratio = row.mean_length / oracle_len;
    row.length_ratio_se = row.mean_length_se / oracle_len;
  } else {
    row.length_ratio = std::numeric_limits<double>::quiet_NaN();
    row.length_ratio_se = std::numeric_limits<double>::quiet_NaN();
  }
  row.mse_point = detail::mean_of(sq_errors);
  row.mse_point_se = detail::se_of(sq_errors);
  return row;
}

template <Forecaster F>
ExperimentResult run_experiment(const ExperimentSpec& spec, const F& forecaster,
                                const Loss& loss = Loss::squared()) {
  spec.validate();
  const std::size_t n = spec.sim.n;
  const FoldLayout layout = build_fold_layout(n, spec.n_tr, spec.n_val, spec.n_te, spec.spacing,
                                              spec.scheme);
  std::vector<double> sweep = spec.phi_grid;
  const bool sweeping = !sweep.empty();
  if (!sweeping) {
    const auto* arma = std::get_if<ArmaSpec>(&spec.sim.noise);
    sweep.push_back(arma && !arma->phi.empty() ? arma->phi[0] : 0.0);
  }

  ExperimentResult result;
  for (double value : sweep) {
    SimSpec sim = spec.sim;
    if (sweeping) {
      auto* arma = std::get_if<ArmaSpec>(&sim.noise);
      if (!arma) throw ValidationError("run_experiment: phi sweep requires ARMA noise");
      if (arma->phi.empty()) arma->phi.push_back(value);
      arma->phi[0] = value;
    }
    const OracleQuantiles oracle = oracle_quantiles(sim, spec.n_tr, spec.n_te, forecaster, loss,
                                                    spec.oracle_draws, spec.seed, spec.scheme,
                                                    spec.threads);
    std::vector<ReplicationRecord> records(spec.replications);
    parallel_for(spec.replications, spec.threads, [&](std::size_t r) {
      ReplicationRecord& rec = records[r];
      rec.replication = r;
      rec.sweep_value = value;
      const TimeSeries series = simulate_linear(replication_sim(sim, n + spec.n_te, spec.seed, r));
      FoldEngine<F> engine(series, forecaster, loss, spec.n_tr, spec.n_val, spec.n_te, spec.spacing,
                           spec.scheme);
      rec.err_sto = engine.stochastic_error(layout);
      for (const MethodSpec& m : spec.methods) {
        rec.outcomes.push_back(detail::run_method(m, engine, layout, spec.alpha, oracle));
      }
    });
    for (std::size_t j = 0; j < spec.methods.size(); ++j) {
      MetricRow row = summarize(spec.methods[j].name, j, value, records, oracle);
      result.failures += row.failures;
      result.rows.push_back(std::move(row));
    }
    result.oracles.push_back(oracle);
    result.records.insert(result.records.end(), std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.end()));
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  return std::visit([&](const auto& f) { return run_experiment(spec, f); },
                    make_forecaster(spec.forecaster));
}

}  // namespace qfcv
