#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfcv/core.hpp"
#include "qfcv/qfcv.hpp"
#include "qfcv/quantreg.hpp"

namespace qfcv {

enum class FcvVariant { naive, autocov, scaling };

inline std::string to_string(FcvVariant v) {
  switch (v) {
    case FcvVariant::naive:
      return "fcv";
    case FcvVariant::autocov:
      return "fcv_c";
    case FcvVariant::scaling:
      return "fcv_p";
  }
  return "fcv";
}

struct FcvConfig {
  FcvVariant variant = FcvVariant::naive;
  double alpha = 0.1;
  std::optional<std::size_t> k_trun;  // autocov only; default min(ceil(K^(1/3)), K - 1)
};

/// Mean of the fold validation errors.
inline double fcv_point(std::span<const double> e) {
  if (e.empty()) throw ValidationError("fcv_point: no fold errors");
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

/// gamma(s) = 1/(K - s) sum_{i=1}^{K-s} (E_i - mean)(E_{i+s} - mean).
inline double sample_autocov(std::span<const double> e, std::size_t s) {
  if (s >= e.size()) {
    throw ValidationError("sample_autocov: lag " + std::to_string(s) + " needs more than " +
                          std::to_string(e.size()) + " values");
  }
  const double mean = fcv_point(e);
  double acc = 0.0;
  for (std::size_t i = 0; i + s < e.size(); ++i) acc += (e[i] - mean) * (e[i + s] - mean);
  return acc / static_cast<double>(e.size() - s);
}

inline std::size_t default_k_trun(std::size_t k) {
  const auto c = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(k)) - 1e-12));
  return std::min(c, k - 1);
}

inline double fcv_se(std::span<const double> e, const FcvConfig& config) {
  const std::size_t k = e.size();
  if (k < 2) throw ValidationError("fcv_se: need K >= 2 fold errors, got " + std::to_string(k));
  const double root_k = std::sqrt(static_cast<double>(k));
  switch (config.variant) {
    case FcvVariant::naive:
      return std::sqrt(sample_autocov(e, 0)) / root_k;
    case FcvVariant::scaling:
      return std::sqrt(sample_autocov(e, 0));
    case FcvVariant::autocov: {
      const std::size_t kt = config.k_trun.value_or(default_k_trun(k));
      if (kt >= k) {
        throw ValidationError("fcv_se: K_trun=" + std::to_string(kt) + " must be < K=" +
                              std::to_string(k));
      }
      double radicand = sample_autocov(e, 0);
      for (std::size_t s = 1; s <= kt; ++s) {
        radicand += 2.0 * (1.0 - static_cast<double>(s) / static_cast<double>(k)) *
                    sample_autocov(e, s);
      }
      if (radicand < 0.0) {
        throw NumericalError("fcv_se: negative autocovariance sum " + std::to_string(radicand) +
                             " with K_trun=" + std::to_string(kt) + "; try a smaller K_trun");
      }
      return std::sqrt(radicand) / root_k;
    }
  }
  return 0.0;
}

/// point +- z_{1-alpha/2} * SE.
inline IntervalRecord fcv_interval(std::span<const double> e, const FcvConfig& config) {
  detail::check_level(config.alpha, "fcv_interval");
  const double point = fcv_point(e);
  const double half = inv_normal_cdf(1.0 - config.alpha / 2.0) * fcv_se(e, config);
  return {{point - half, point + half}, to_string(config.variant), 1.0 - config.alpha, 0};
}

/// E_i: mean validation loss of fold i, i = 1..K.
template <Forecaster F>
std::vector<double> fold_validation_errors(FoldEngine<F>& engine, const FoldLayout& layout) {
  std::vector<double> e;
  e.reserve(layout.fold_count());
  for (std::size_t i = 1; i <= layout.fold_count(); ++i) e.push_back(fcv_point(engine.fold(layout, i).val_losses));
  return e;
}

template <Forecaster F>
std::vector<double> fold_validation_errors(const TimeSeries& series, const FoldLayout& layout,
                                           const F& forecaster, const Loss& loss) {
  FoldEngine<F> engine(series, forecaster, loss, layout.n_tr, layout.n_val, layout.n_te,
                       layout.spacing, layout.scheme);
  return fold_validation_errors(engine, layout);
}

}  // namespace qfcv
