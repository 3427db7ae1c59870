#include <gtest/gtest.h>

#include "helpers.hpp"
#include "qfcv/evalharness.hpp"

using namespace qfcv;

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.sim = testing_support::ar_sim(200, 5, 0.5, 11);
  s.n_tr = 40;
  s.n_val = 5;
  s.n_te = 5;
  s.spacing = 5;
  s.forecaster.kind = ForecasterSpec::Kind::ridge;
  s.methods = {MethodSpec::qfcv_m(1), MethodSpec::qfcv_m(0), MethodSpec::fcv_variant(FcvVariant::naive),
               MethodSpec::fcv_variant(FcvVariant::scaling), MethodSpec::oracle()};
  s.replications = 40;
  s.oracle_draws = 200;
  s.seed = 3;
  return s;
}

}  // namespace

TEST(Harness, MsePointExamples) {
  EXPECT_EQ(mse_point(std::vector<double>{1, 2}, std::vector<double>{1, 4}), 2.0);
  EXPECT_EQ(mse_point(std::vector<double>{0}, std::vector<double>{0}), 0.0);
  EXPECT_THROW(mse_point(std::vector<double>{1}, std::vector<double>{1, 2}), ValidationError);
}

TEST(Harness, ParallelForFillsEverySlot) {
  for (std::size_t threads : {1u, 3u, 8u}) {
    std::vector<int> v(37, 0);
    parallel_for(v.size(), threads, [&](std::size_t i) { v[i] = static_cast<int>(i) * 2; });
    for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(v[i], static_cast<int>(i) * 2);
  }
  EXPECT_THROW(parallel_for(4, 2, [](std::size_t i) {
                 if (i == 3) throw NumericalError("boom");
               }),
               NumericalError);
}

TEST(Harness, NoiselessOracleIsZero) {
  SimSpec sim = testing_support::ar_sim(100, 3, 0.5, 1);
  sim.noise_scale = 0.0;
  const RidgeForecaster f{RidgeSpec{0.0, true}};
  const OracleQuantiles q = oracle_quantiles(sim, 40, 5, f, Loss::squared(), 100, 9);
  EXPECT_NEAR(q.q05, 0.0, 1e-20);
  EXPECT_NEAR(q.q95, 0.0, 1e-20);
  EXPECT_NEAR(q.mc_err, 0.0, 1e-20);
}

TEST(Harness, DisjointOracleDrawsAgree) {
  const SimSpec sim = testing_support::ar_sim(100, 3, 0.5, 2);
  const RidgeForecaster f{};
  const OracleQuantiles a = oracle_quantiles(sim, 40, 5, f, Loss::squared(), 1500, 4);
  const OracleQuantiles b = oracle_quantiles(sim, 40, 5, f, Loss::squared(), 1500, 4,
                                             WindowScheme::rolling, 1, 1500);
  EXPECT_NE(a.mc_err, b.mc_err);
  EXPECT_LT(std::abs(a.mc_err - b.mc_err), 4.0 * std::hypot(a.mc_err_se, b.mc_err_se));
  EXPECT_LT(a.q05, a.mc_err);
  EXPECT_GT(a.q95, a.mc_err);
}

TEST(Harness, ExperimentMetricsAreConsistent) {
  const ExperimentResult r = run_experiment(small_spec());
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.failures, 0u);
  EXPECT_EQ(r.records.size(), 40u);
  for (const MetricRow& row : r.rows) {
    EXPECT_EQ(row.replications, 40u);
    EXPECT_NEAR(row.miscover_hi + row.miscover_lo, 1.0 - row.coverage_sto, 1e-12) << row.method;
    EXPECT_GE(row.coverage_err, 0.0);
    EXPECT_LE(row.coverage_err, 1.0);
    EXPECT_GE(row.mean_length, 0.0);
  }
  const MetricRow& oracle = r.rows.back();
  EXPECT_EQ(oracle.method, "oracle");
  EXPECT_DOUBLE_EQ(oracle.length_ratio, 1.0);
  EXPECT_EQ(oracle.coverage_err, 1.0);
  EXPECT_EQ(r.rows[0].method, "qfcv1");
  EXPECT_EQ(r.rows[2].method, "fcv");
  EXPECT_EQ(r.rows[3].method, "fcv_p");
}

TEST(Harness, ResultsIndependentOfThreadCount) {
  ExperimentSpec s = small_spec();
  s.replications = 12;
  const ExperimentResult a = run_experiment(s);
  s.threads = 4;
  const ExperimentResult b = run_experiment(s);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    ASSERT_EQ(a.records[i].err_sto, b.records[i].err_sto);
    for (std::size_t j = 0; j < a.records[i].outcomes.size(); ++j) {
      ASSERT_EQ(a.records[i].outcomes[j].interval.lo, b.records[i].outcomes[j].interval.lo);
      ASSERT_EQ(a.records[i].outcomes[j].interval.hi, b.records[i].outcomes[j].interval.hi);
    }
  }
  EXPECT_EQ(a.oracles[0].q95, b.oracles[0].q95);
}

TEST(Harness, SweepProducesRowsPerValue) {
  ExperimentSpec s = small_spec();
  s.replications = 5;
  s.methods = {MethodSpec::qfcv_m(1)};
  s.phi_grid = {0.1, 0.7};
  const ExperimentResult r = run_experiment(s);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].sweep_value, 0.1);
  EXPECT_EQ(r.rows[1].sweep_value, 0.7);
  EXPECT_EQ(r.oracles.size(), 2u);
}

TEST(Harness, MethodFailuresAreRecorded) {
  ExperimentSpec s = small_spec();
  s.replications = 3;
  s.sim.n = 60;  // K = 3 folds: too few for qfcv with m = 2
  s.methods = {MethodSpec::qfcv_m(2), MethodSpec::fcv_variant(FcvVariant::naive)};
  const ExperimentResult r = run_experiment(s);
  EXPECT_EQ(r.rows[0].failures, 3u);
  EXPECT_EQ(r.rows[0].replications, 0u);
  EXPECT_EQ(r.rows[1].failures, 0u);
  EXPECT_EQ(r.failures, 3u);
  EXPECT_FALSE(r.records[0].outcomes[0].error.empty());
}
