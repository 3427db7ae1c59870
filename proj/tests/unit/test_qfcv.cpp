#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "qfcv/forecasters.hpp"
#include "qfcv/qfcv.hpp"

using namespace qfcv;
using testing_support::MeanForecaster;
using testing_support::series_of;

TEST(AuxFeatures, BlocksFrontLoadRemainder) {
  const auto b = aux_blocks({41, 45}, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0], (IndexRange{41, 43}));
  EXPECT_EQ(b[1], (IndexRange{44, 45}));
  EXPECT_EQ(aux_blocks({1, 5}, 5).size(), 5u);
  EXPECT_TRUE(aux_blocks({1, 5}, 0).empty());
  EXPECT_THROW(aux_blocks({1, 5}, 6), ValidationError);
}

TEST(AuxFeatures, BlockMeans) {
  const std::vector<double> l{1, 2, 3, 4, 6};
  EXPECT_EQ(aux_from_losses(l, 1), (std::vector<double>{3.2}));
  EXPECT_EQ(aux_from_losses(l, 2), (std::vector<double>{2.0, 5.0}));
  EXPECT_EQ(aux_from_losses(l, 5), l);
  EXPECT_EQ(aux_from_losses(l, 0), (std::vector<double>{1.0}));
}

TEST(AuxFeatures, FromForecaster) {
  const TimeSeries s = series_of({1, 3, 2, 6, 4, 8});
  const auto f = aux_features(s.window(1, 2), s.window(3, 6), MeanForecaster{}, Loss::squared(), 2);
  // mean 2; losses 0, 16, 4, 36
  EXPECT_EQ(f, (std::vector<double>{8.0, 20.0}));
  EXPECT_THROW(aux_features(s.window(1, 2), s.window(3, 4), MeanForecaster{}, Loss::squared(), 3),
               ValidationError);
}

TEST(ErrPairs, ConstantSeriesGivesZeros) {
  const TimeSeries s = series_of(std::vector<double>(60, 2.5));
  const FoldLayout l = build_fold_layout(60, 10, 5, 5, 5);
  const ErrPairs ep = compute_err_pairs(s, l, MeanForecaster{}, Loss::squared(), {1});
  ASSERT_EQ(ep.pairs.size(), l.fold_count());
  for (const auto& p : ep.pairs) {
    EXPECT_EQ(p.err_val, (std::vector<double>{0.0}));
    EXPECT_EQ(p.err_test, 0.0);
  }
  EXPECT_EQ(ep.star_val, (std::vector<double>{0.0}));
}

TEST(ErrPairs, HandComputedSixPoints) {
  const TimeSeries s = series_of({1, 3, 2, 6, 4, 8});
  const FoldLayout l = build_fold_layout(6, 2, 1, 1, 1);
  const ErrPairs ep = compute_err_pairs(s, l, MeanForecaster{}, Loss::squared(), {1});
  ASSERT_EQ(ep.pairs.size(), 3u);
  EXPECT_EQ(ep.pairs[0].err_val[0], 0.0);
  EXPECT_EQ(ep.pairs[0].err_test, 12.25);
  EXPECT_EQ(ep.pairs[1].err_val[0], 12.25);
  EXPECT_EQ(ep.pairs[1].err_test, 0.0);
  EXPECT_EQ(ep.pairs[2].err_val[0], 0.0);
  EXPECT_EQ(ep.pairs[2].err_test, 9.0);
  EXPECT_EQ(ep.star_val, (std::vector<double>{9.0}));
}

TEST(ErrPairs, OnlyUsesObservedPrefix) {
  std::vector<double> y(80);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (double& v : y) v = nd(rng);
  const TimeSeries a = series_of(y);
  for (std::size_t t = 61; t < 80; ++t) y[t] = 1e6;
  const TimeSeries b = series_of(y);
  const FoldLayout l = build_fold_layout(60, 10, 5, 5, 5);
  const ErrPairs ea = compute_err_pairs(a, l, MeanForecaster{}, Loss::squared(), {2});
  const ErrPairs eb = compute_err_pairs(b, l, MeanForecaster{}, Loss::squared(), {2});
  for (std::size_t i = 0; i < ea.pairs.size(); ++i) {
    EXPECT_EQ(ea.pairs[i].err_val, eb.pairs[i].err_val);
    EXPECT_EQ(ea.pairs[i].err_test, eb.pairs[i].err_test);
  }
  EXPECT_EQ(ea.star_val, eb.star_val);
}

TEST(QfcvInterval, IdenticalTestErrorsGiveDegenerateInterval) {
  std::vector<ErrPair> pairs;
  for (int i = 0; i < 12; ++i) pairs.push_back({{static_cast<double>(i % 5)}, 3.0});
  const IntervalRecord r = qfcv_interval(pairs, {2.0}, 0.1);
  EXPECT_NEAR(r.interval.lo, 3.0, 1e-12);
  EXPECT_NEAR(r.interval.hi, 3.0, 1e-12);
  EXPECT_EQ(r.method, "qfcv");
  EXPECT_DOUBLE_EQ(r.nominal_level, 0.9);
}

TEST(QfcvInterval, ConstantFeatureGivesMarginalQuantiles) {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> ex;
  std::vector<ErrPair> pairs;
  std::vector<double> tests;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> losses{ex(rng), ex(rng)};
    pairs.push_back({aux_from_losses(losses, 0), ex(rng)});
    tests.push_back(pairs.back().err_test);
  }
  const QfcvFit f = qfcv_fit(pairs, aux_from_losses(std::vector<double>{0.1, 0.2}, 0), 0.1);
  EXPECT_TRUE(f.lo_model.degenerate);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(40, 1);
  EXPECT_NEAR(oracle::risk_of(ones, tests, 0.05, Eigen::VectorXd::Constant(1, f.interval.lo)),
              oracle::risk_of(ones, tests, 0.05,
                              Eigen::VectorXd::Constant(1, oracle::lower_quantile_sorted(tests, 0.05))),
              1e-12);
  EXPECT_NEAR(oracle::risk_of(ones, tests, 0.95, Eigen::VectorXd::Constant(1, f.interval.hi)),
              oracle::risk_of(ones, tests, 0.95,
                              Eigen::VectorXd::Constant(1, oracle::lower_quantile_sorted(tests, 0.95))),
              1e-12);
}

TEST(QfcvInterval, HandComputedThreeFolds) {
  // pairs (0, 12.25), (12.25, 0), (0, 9): the line through the two upper points is hit by the
  // 95% fit; the 5% fit passes through (0, 9) and (12.25, 0)
  const std::vector<ErrPair> pairs{{{0.0}, 12.25}, {{12.25}, 0.0}, {{0.0}, 9.0}};
  const QfcvFit f = qfcv_fit(pairs, {9.0}, 0.1);
  EXPECT_LE(f.interval.lo, f.interval.hi);
  EXPECT_GE(f.interval.lo, 0.0);
  const Eigen::MatrixXd x{{0.0}, {12.25}, {0.0}};
  const std::vector<double> y{12.25, 0.0, 9.0};
  EXPECT_NEAR(pinball_risk(f.hi_model, x, y), oracle::min_affine_pinball_risk(x, y, 0.95), 1e-12);
  EXPECT_NEAR(pinball_risk(f.lo_model, x, y), oracle::min_affine_pinball_risk(x, y, 0.05), 1e-12);
}

TEST(QfcvInterval, RejectsTooFewFolds) {
  const std::vector<ErrPair> pairs{{{0.0}, 1.0}, {{1.0}, 2.0}};
  EXPECT_THROW(qfcv_fit(pairs, {1.0}, 0.1), ValidationError);
  std::vector<ErrPair> five(5, ErrPair{{0.0}, 1.0});
  EXPECT_THROW(qfcv_fit(five, {1.0}, 0.1, 3), ValidationError);
  EXPECT_THROW(qfcv_fit(five, {1.0, 2.0}, 0.1), ValidationError);
}

TEST(QfcvInterval, OrderedAndNonnegativeOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<ErrPair> pairs;
    const std::size_t m = 1 + rep % 3;
    for (int i = 0; i < 25; ++i) {
      std::vector<double> v(m);
      for (double& x : v) x = std::exp(nd(rng));
      pairs.push_back({v, std::exp(nd(rng) + v[0])});
    }
    std::vector<double> star(m);
    for (double& x : star) x = std::exp(2.0 * nd(rng));
    const QfcvFit f = qfcv_fit(pairs, star, 0.1);
    ASSERT_LE(f.interval.lo, f.interval.hi);
    ASSERT_GE(f.interval.lo, 0.0);
    const QfcvFit wide = qfcv_fit(pairs, star, 0.02);
    (void)wide;
  }
}

TEST(QfcvInterval, LossScalingEquivariance) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> ex;
  std::vector<ErrPair> pairs, scaled;
  for (int i = 0; i < 30; ++i) {
    const double v = ex(rng), t = v + ex(rng);
    pairs.push_back({{v}, t});
    scaled.push_back({{7.0 * v}, 7.0 * t});
  }
  const Interval a = qfcv_fit(pairs, {1.3}, 0.1).interval;
  const Interval b = qfcv_fit(scaled, {7.0 * 1.3}, 0.1).interval;
  EXPECT_NEAR(b.lo, 7.0 * a.lo, 1e-9);
  EXPECT_NEAR(b.hi, 7.0 * a.hi, 1e-9);
}

TEST(QfcvInterval, MemorySpanStacksLags) {
  std::vector<ErrPair> pairs;
  for (int i = 0; i < 10; ++i) pairs.push_back({{static_cast<double>(i)}, static_cast<double>(10 * i)});
  const auto d = detail::stack_pairs(pairs, {42.0}, 2);
  ASSERT_EQ(d.features.rows(), 9);
  ASSERT_EQ(d.features.cols(), 2);
  EXPECT_EQ(d.features(0, 0), 1.0);
  EXPECT_EQ(d.features(0, 1), 0.0);
  EXPECT_EQ(d.targets[0], 10.0);
  EXPECT_EQ(d.star, (std::vector<double>{42.0, 9.0}));
}

TEST(QfcvPoint, LeastSquaresExamples) {
  const std::vector<ErrPair> line{{{1.0}, 3.0}, {{2.0}, 5.0}, {{3.0}, 7.0}, {{4.0}, 9.0}};
  EXPECT_NEAR(qfcv_point(line, {10.0}), 21.0, 1e-10);
  const std::vector<ErrPair> flat{{{1.0}, 1.0}, {{1.0}, 2.0}, {{1.0}, 6.0}};
  EXPECT_NEAR(qfcv_point(flat, {1.0}), 3.0, 1e-12);
  const std::vector<ErrPair> one{{{1.0}, 1.0}, {{1.0}, 2.0}};
  EXPECT_THROW(qfcv_point(one, {1.0}), ValidationError);
}

TEST(RunQfcv, EndToEndOnSimulatedData) {
  const TimeSeries s = simulate_linear(testing_support::ar_sim(400, 5, 0.5, 7));
  QfcvConfig c;
  c.n_tr = 40;
  c.n_val = 5;
  c.n_te = 5;
  c.spacing = 5;
  const QfcvOutput out = run_qfcv(s, 400, RidgeForecaster{}, Loss::squared(), c);
  EXPECT_EQ(out.pairs.size(), build_fold_layout(400, 40, 5, 5, 5).fold_count());
  EXPECT_GE(out.interval.interval.lo, 0.0);
  EXPECT_LT(out.interval.interval.lo, out.interval.interval.hi);
  EXPECT_EQ(out.interval.time_index, 400u);
  EXPECT_TRUE(std::isfinite(out.point));

  c.scheme = WindowScheme::expanding;
  const QfcvOutput ex = run_qfcv(s, 400, RidgeForecaster{}, Loss::squared(), c);
  EXPECT_LE(ex.interval.interval.lo, ex.interval.interval.hi);

  c.aux.m = 6;
  EXPECT_THROW(run_qfcv(s, 400, RidgeForecaster{}, Loss::squared(), c), ValidationError);
}

TEST(FoldEngine, MemoizesAcrossPrefixLengths) {
  const TimeSeries s = simulate_linear(testing_support::ar_sim(300, 3, 0.5, 8));
  FoldEngine<RidgeForecaster> e(s, RidgeForecaster{}, Loss::squared(), 30, 5, 5, 5);
  const FoldLayout short_l = e.layout(200);
  const FoldLayout long_l = e.layout(300);
  const double a = e.fold(short_l, 3).test_error;
  FoldEngine<RidgeForecaster> fresh(s, RidgeForecaster{}, Loss::squared(), 30, 5, 5, 5);
  EXPECT_EQ(a, fresh.fold(long_l, 3).test_error);
  EXPECT_THROW(e.fold(short_l, 0), ValidationError);
  EXPECT_THROW(e.fold(short_l, short_l.fold_count() + 1), ValidationError);
}
