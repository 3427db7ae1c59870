#pragma once

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "qfcv/acidf.hpp"
#include "qfcv/config.hpp"
#include "qfcv/evalharness.hpp"
#include "qfcv/fcv.hpp"
#include "qfcv/forecasters.hpp"
#include "qfcv/io.hpp"
#include "qfcv/qfcv.hpp"
#include "qfcv/sim.hpp"

namespace qfcv::cli {

enum ExitCode { ok = 0, validation_error = 1, runtime_error = 2 };

struct Options {
  std::string command;
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<std::size_t> threads;
};

using AnyForecaster = std::variant<LassoForecaster, RidgeForecaster, GarchForecaster>;

inline AnyForecaster forecaster_of(const RunConfig& c) {
  if (c.get<std::string>("forecaster.kind") == "garch") {
    return GarchForecaster{std::max(c.get<std::size_t>("layout.n_val"), c.get<std::size_t>("layout.n_te"))};
  }
  return std::visit([](auto f) -> AnyForecaster { return f; }, make_forecaster(forecaster_spec(c)));
}

inline void write_provenance(std::ostream& out, const std::string& command, const RunConfig& c) {
  out << "# qfcv " << command << "\n";
  out << "# seed: " << c.get<std::uint64_t>("seed") << "\n";
  out << "# config: " << c.dump() << "\n";
}

/// Data for the analysis commands: the input CSV, or a simulated series of length n.
inline TimedSeries load_data(const Options& o, const RunConfig& c, std::size_t n) {
  if (o.input) return read_series_csv(*o.input);
  TimedSeries d;
  d.series = simulate_linear(sim_spec(c, n));
  for (std::size_t t = 1; t <= n; ++t) d.t.push_back(static_cast<std::int64_t>(t));
  return d;
}

inline int cmd_simulate(const Options&, const RunConfig& c, std::ostream& out, std::ostream&) {
  write_provenance(out, "simulate", c);
  write_series_csv(out, simulate_linear(sim_spec(c, c.get<std::size_t>("layout.n"))));
  return ok;
}

inline int cmd_qfcv(const Options& o, const RunConfig& c, std::ostream& out, std::ostream&) {
  const TimedSeries d = load_data(o, c, c.get<std::size_t>("layout.n"));
  const std::size_t n = d.series.size();
  const QfcvConfig q = qfcv_config(c);
  const QfcvOutput r = std::visit(
      [&](const auto& f) { return run_qfcv(d.series, n, f, loss_of(c), q); }, forecaster_of(c));
  write_provenance(out, "qfcv", c);
  out << "method,n,K,lo,hi,point,nominal_level\n";
  out << "qfcv" << q.aux.m << ',' << n << ',' << r.pairs.size() << ','
      << format_double(r.interval.interval.lo) << ',' << format_double(r.interval.interval.hi)
      << ',' << format_double(r.point) << ',' << format_double(1.0 - q.alpha) << '\n';
  return ok;
}

inline int cmd_fcv(const Options& o, const RunConfig& c, std::ostream& out, std::ostream&) {
  const TimedSeries d = load_data(o, c, c.get<std::size_t>("layout.n"));
  const std::size_t n = d.series.size();
  const FoldLayout layout = build_fold_layout(n, c.get<std::size_t>("layout.n_tr"),
                                              c.get<std::size_t>("layout.n_val"),
                                              c.get<std::size_t>("layout.n_te"),
                                              c.get<std::size_t>("layout.spacing"), scheme_of(c));
  const std::vector<double> e = std::visit(
      [&](const auto& f) { return fold_validation_errors(d.series, layout, f, loss_of(c)); },
      forecaster_of(c));
  const FcvConfig f = fcv_config(c);
  const IntervalRecord rec = fcv_interval(e, f);
  write_provenance(out, "fcv", c);
  out << "method,n,K,lo,hi,point,se,nominal_level\n";
  out << rec.method << ',' << n << ',' << e.size() << ',' << format_double(rec.interval.lo) << ','
      << format_double(rec.interval.hi) << ',' << format_double(fcv_point(e)) << ','
      << format_double(fcv_se(e, f)) << ',' << format_double(rec.nominal_level) << '\n';
  return ok;
}

inline int cmd_aqfcv(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err) {
  const TimedSeries d = load_data(o, c, c.get<std::size_t>("layout.n"));
  const AciConfig a = aci_config(c, d.series.size());
  const QfcvConfig q = qfcv_config(c);
  const RollingRun run = std::visit(
      [&](const auto& f) {
        AqfcvConstructor<std::decay_t<decltype(f)>> ctor(d.series, f, loss_of(c), q);
        return run_acidf(ctor, a);
      },
      forecaster_of(c));
  write_provenance(out, "aqfcv", c);
  out << "t,lo,hi,err_sto,covered,theta\n";
  for (const RollingRecord& r : run.records) {
    out << d.t[r.t - 1] << ',' << format_double(r.interval.lo) << ',' << format_double(r.interval.hi)
        << ',' << format_double(r.err_sto) << ',' << (r.covered ? 1 : 0) << ','
        << format_double(r.theta) << '\n';
  }
  if (run.resolved_count() > 0) {
    err << "time-average coverage " << format_double(time_avg_coverage(run)) << " over "
        << run.resolved_count() << " intervals\n";
  }
  return ok;
}

inline int cmd_evaluate(const Options&, const RunConfig& c, std::ostream& out, std::ostream& err) {
  const ExperimentSpec spec = experiment_spec(c);
  const ExperimentResult res = run_experiment(spec);
  write_provenance(out, "evaluate", c);
  out << "method,sweep_value,replications,failures,coverage_sto,coverage_sto_se,coverage_err,"
         "coverage_err_se,miscover_hi,miscover_hi_se,miscover_lo,miscover_lo_se,mean_length,"
         "mean_length_se,length_ratio,length_ratio_se,mse_point,mse_point_se\n";
  for (const MetricRow& r : res.rows) {
    out << r.method << ',' << format_double(r.sweep_value) << ',' << r.replications << ','
        << r.failures;
    for (double v : {r.coverage_sto, r.coverage_sto_se, r.coverage_err, r.coverage_err_se,
                     r.miscover_hi, r.miscover_hi_se, r.miscover_lo, r.miscover_lo_se,
                     r.mean_length, r.mean_length_se, r.length_ratio, r.length_ratio_se,
                     r.mse_point, r.mse_point_se}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  if (res.failures > 0) {
    err << res.failures << " method replications failed\n";
    for (const auto& rec : res.records) {
      for (std::size_t j = 0; j < rec.outcomes.size(); ++j) {
        if (!rec.outcomes[j].ok) {
          err << "  replication " << rec.replication << " " << spec.methods[j].name << ": "
              << rec.outcomes[j].error << "\n";
        }
      }
    }
    return runtime_error;
  }
  return ok;
}

/// Runs the command line `args` (without the program name). Results go to --output or `out`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Uncertainty intervals for time-series forecast errors"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "write a simulated series as CSV"},
      {"qfcv", "QFCV prediction interval for the test error after the last row"},
      {"fcv", "FCV point estimate and CLT interval"},
      {"aqfcv", "rolling AQFCV intervals"},
      {"evaluate", "replicated simulation experiment with coverage metrics"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", o.config, "JSON configuration file");
    sub->add_option("-s,--set", o.sets, "override key=value (repeatable)");
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("-i,--input", o.input, "input CSV with header t,x1,...,xp,y");
    sub->add_option("-o,--output", o.output, "output file (default stdout)");
    sub->add_option("-j,--threads", o.threads, "worker threads");
    sub->callback([&o, name = name] { o.command = name; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o_out, o_err;
    const int code = app.exit(e, o_out, o_err);
    out << o_out.str();
    err << o_err.str();
    return code == 0 ? ok : validation_error;
  }

  try {
    std::vector<std::string> sets = o.sets;
    if (o.seed) sets.push_back("seed=" + std::to_string(*o.seed));
    if (o.threads) sets.push_back("threads=" + std::to_string(*o.threads));
    const RunConfig config = load_config(o.config, sets);

    std::ofstream file;
    if (o.output) {
      file.open(*o.output);
      if (!file) throw ValidationError("cannot open output file '" + *o.output + "'");
    }
    std::ostream& dest = o.output ? static_cast<std::ostream&>(file) : out;
    if (o.command == "simulate") return cmd_simulate(o, config, dest, err);
    if (o.command == "qfcv") return cmd_qfcv(o, config, dest, err);
    if (o.command == "fcv") return cmd_fcv(o, config, dest, err);
    if (o.command == "aqfcv") return cmd_aqfcv(o, config, dest, err);
    return cmd_evaluate(o, config, dest, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return validation_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return runtime_error;
  }
}

}  // namespace qfcv::cli
