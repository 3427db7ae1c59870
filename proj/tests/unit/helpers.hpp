#pragma once

#include <span>
#include <vector>

#include "qfcv/core.hpp"
#include "qfcv/sim.hpp"

namespace testing_support {

/// Predicts the training-window mean of y.
struct MeanForecaster {
  struct Model {
    double mean = 0.0;
    double predict(const qfcv::TimePoint&, std::size_t) const { return mean; }
  };
  Model fit(std::span<const qfcv::TimePoint> train) const {
    double s = 0.0;
    for (const auto& z : train) s += z.y;
    return {s / static_cast<double>(train.size())};
  }
};

inline qfcv::TimeSeries series_of(const std::vector<double>& y) {
  std::vector<qfcv::TimePoint> pts;
  for (double v : y) pts.push_back({{}, v});
  return qfcv::TimeSeries(pts);
}

inline qfcv::SimSpec ar_sim(std::size_t n, std::size_t p, double phi, std::uint64_t seed,
                            std::uint64_t stream = 0) {
  qfcv::SimSpec s;
  s.n = n;
  s.p = p;
  s.beta = qfcv::sparse_beta(p);
  qfcv::ArmaSpec a;
  a.phi = {phi};
  a.burn_in = 200;
  s.noise = a;
  s.seed = seed;
  s.stream = stream;
  return s;
}

}  // namespace testing_support
