#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "qfcv/core.hpp"
#include "qfcv/forecasters.hpp"

namespace qfcv {

/// SplitMix64 finalizer, used to derive independent engine seeds from (seed, stream).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// A reproducible random stream: std::mt19937_64 seeded by SplitMix64(seed, stream). Normal draws
/// use boost's ziggurat sampler, whose output is fixed across standard libraries.
class RngStream {
 public:
  static constexpr const char* algorithm = "mt19937_64/splitmix64/boost-ziggurat";

  RngStream(std::uint64_t base_seed, std::uint64_t stream_id)
      : base_seed_(base_seed),
        stream_id_(stream_id),
        engine_(splitmix64(splitmix64(base_seed) ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t base_seed() const { return base_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Independent child stream; the parent's state is untouched.
  RngStream child(std::uint64_t index) const {
    return RngStream(splitmix64(base_seed_ ^ 0xa0761d6478bd642fULL) ^ stream_id_,
                     splitmix64(index + 1));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return boost::random::uniform_01<double>()(engine_); }

 private:
  std::uint64_t base_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

struct ArmaSpec {
  std::vector<double> phi;    // AR coefficients
  std::vector<double> theta;  // MA coefficients
  double innovation_sd = 1.0;
  std::size_t burn_in = 500;

  /// True when every root of the AR polynomial lies outside the unit circle.
  bool stationary() const {
    if (phi.empty()) return true;
    const auto a = static_cast<Eigen::Index>(phi.size());
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(a, a);
    for (Eigen::Index j = 0; j < a; ++j) companion(0, j) = phi[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 1; j < a; ++j) companion(j, j - 1) = 1.0;
    const auto eig = companion.eigenvalues();
    for (Eigen::Index j = 0; j < a; ++j) {
      if (std::abs(eig[j]) >= 1.0 - 1e-12) return false;
    }
    return true;
  }
};

/// The MA weights (0.1, 0.2, ..., 0.9, 1, 1, 0.9, ..., 0.1) of the smooth ARMA(1,20) setting.
inline std::vector<double> wedge_ma_weights() {
  std::vector<double> w;
  for (int i = 1; i <= 10; ++i) w.push_back(i / 10.0);
  for (int i = 10; i >= 1; --i) w.push_back(i / 10.0);
  return w;
}

/// Integrated AR(1) path plus independent N(0, t^exponent) noise.
struct NonstationarySpec {
  double arima_phi = 0.99;
  double variance_growth_exponent = 4.0;
};

using NoiseSpec = std::variant<ArmaSpec, NonstationarySpec>;

struct SimSpec {
  std::size_t n = 1;
  std::size_t p = 20;
  std::vector<double> beta;
  NoiseSpec noise = ArmaSpec{};
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// beta = (1, 1, 1, 1, 0, ..., 0) in R^p.
inline std::vector<double> sparse_beta(std::size_t p, std::size_t active = 4) {
  std::vector<double> b(p, 0.0);
  for (std::size_t j = 0; j < std::min(active, p); ++j) b[j] = 1.0;
  return b;
}

namespace detail {
inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double c : v) {
    if (!std::isfinite(c)) throw ValidationError(std::string("ArmaSpec: non-finite ") + what);
  }
}
}  // namespace detail

/// eps_t = sum_k phi_k eps_{t-k} + eta_t + sum_i theta_i eta_{t-i}, eta ~ N(0, sd^2), started from a
/// zero state; the first `burn_in` values are discarded.
inline std::vector<double> gen_arma(const ArmaSpec& spec, std::size_t n, RngStream& rng) {
  if (n == 0) throw ValidationError("gen_arma: n must be >= 1");
  detail::check_finite(spec.phi, "AR coefficient");
  detail::check_finite(spec.theta, "MA coefficient");
  if (!std::isfinite(spec.innovation_sd) || spec.innovation_sd <= 0.0) {
    throw ValidationError("gen_arma: innovation_sd must be finite and positive");
  }

  const std::size_t a = spec.phi.size();
  const std::size_t b = spec.theta.size();
  const std::size_t total = n + spec.burn_in;
  std::vector<double> eps(total, 0.0);
  std::vector<double> eta(total, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    eta[t] = spec.innovation_sd * rng.normal();
    double v = eta[t];
    for (std::size_t k = 1; k <= a && k <= t; ++k) v += spec.phi[k - 1] * eps[t - k];
    for (std::size_t i = 1; i <= b && i <= t; ++i) v += spec.theta[i - 1] * eta[t - i];
    eps[t] = v;
  }
  return {eps.begin() + static_cast<std::ptrdiff_t>(spec.burn_in), eps.end()};
}

/// ARIMA(1,1,0) path (running sum of an AR(1) with unit innovations) plus independent
/// N(0, t^exponent) draws, t = 1..n.
inline std::vector<double> gen_nonstationary(const NonstationarySpec& spec, std::size_t n,
                                             RngStream& rng) {
  if (n == 0) throw ValidationError("gen_nonstationary: n must be >= 1");
  if (!std::isfinite(spec.arima_phi)) throw ValidationError("gen_nonstationary: non-finite phi");
  if (!(spec.variance_growth_exponent >= 0.0)) {
    throw ValidationError("gen_nonstationary: variance_growth_exponent must be >= 0");
  }
  RngStream path_rng = rng.child(0);
  RngStream noise_rng = rng.child(1);
  std::vector<double> out(n);
  double ar = 0.0;
  double level = 0.0;
  for (std::size_t t = 1; t <= n; ++t) {
    ar = spec.arima_phi * ar + path_rng.normal();
    level += ar;
    const double sd = std::pow(static_cast<double>(t), spec.variance_growth_exponent / 2.0);
    out[t - 1] = level + sd * noise_rng.normal();
  }
  return out;
}

inline std::vector<double> gen_noise(const NoiseSpec& noise, std::size_t n, RngStream& rng) {
  return std::visit(
      [&](const auto& s) -> std::vector<double> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ArmaSpec>) {
          return gen_arma(s, n, rng);
        } else {
          return gen_nonstationary(s, n, rng);
        }
      },
      noise);
}

/// y_t = x_t . beta + noise_scale * eps_t with x_t ~ N(0, I_p). Features and noise come from
/// separate child streams, so simulating a longer series extends a shorter one exactly.
inline TimeSeries simulate_linear(const SimSpec& spec) {
  if (spec.n == 0) throw ValidationError("simulate_linear: n must be >= 1");
  if (spec.beta.size() != spec.p) {
    throw ValidationError("simulate_linear: |beta| = " + std::to_string(spec.beta.size()) +
                          " but p = " + std::to_string(spec.p));
  }
  if (!std::isfinite(spec.noise_scale)) throw ValidationError("simulate_linear: bad noise_scale");

  RngStream root(spec.seed, spec.stream);
  RngStream feature_rng = root.child(0);
  RngStream noise_rng = root.child(1);
  const std::vector<double> eps = gen_noise(spec.noise, spec.n, noise_rng);

  std::vector<TimePoint> points(spec.n);
  for (std::size_t t = 0; t < spec.n; ++t) {
    TimePoint& z = points[t];
    z.x.resize(spec.p);
    double mean = 0.0;
    for (std::size_t j = 0; j < spec.p; ++j) {
      z.x[j] = feature_rng.normal();
      mean += z.x[j] * spec.beta[j];
    }
    z.y = mean + spec.noise_scale * eps[t];
  }
  return TimeSeries(std::move(points));
}

/// Returns R_t = sigma_t * e_t with sigma_t^2 = omega + tau R_{t-1}^2 + beta sigma_{t-1}^2, started at
/// the stationary variance and run through a burn-in.
inline std::vector<double> simulate_garch11(const Garch11Params& g, std::size_t n, RngStream& rng,
                                            std::size_t burn_in = 500) {
  if (!(g.omega > 0.0) || g.tau < 0.0 || g.beta < 0.0 || g.tau + g.beta >= 1.0) {
    throw ValidationError("simulate_garch11: parameters violate omega > 0, tau, beta >= 0, "
                          "tau + beta < 1");
  }
  std::vector<double> out;
  out.reserve(n);
  double sigma2 = g.omega / (1.0 - g.tau - g.beta);
  double r = 0.0;
  for (std::size_t t = 0; t < n + burn_in; ++t) {
    if (t > 0) sigma2 = g.omega + g.tau * r * r + g.beta * sigma2;
    r = std::sqrt(sigma2) * rng.normal();
    if (t >= burn_in) out.push_back(r);
  }
  return out;
}

/// Series with x_t = (R_t) and y_t = R_t^2, the realized-volatility layout consumed by the GARCH
/// forecaster.
inline TimeSeries returns_to_series(const std::vector<double>& returns) {
  std::vector<TimePoint> pts;
  pts.reserve(returns.size());
  for (double r : returns) pts.push_back(TimePoint{{r}, r * r});
  return TimeSeries(std::move(pts));
}

}  // namespace qfcv
