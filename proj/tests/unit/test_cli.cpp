#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "qfcv/cli.hpp"

using namespace qfcv;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("qfcv_test_" + name);
}

}  // namespace

TEST(Config, DefaultsAndEcho) {
  const RunConfig c = parse_config_text(R"({"alpha": 0.2, "layout": {"n": 300}})");
  EXPECT_EQ(c.get<double>("alpha"), 0.2);
  EXPECT_EQ(c.get<std::size_t>("layout.n"), 300u);
  EXPECT_EQ(c.get<std::size_t>("layout.n_tr"), 40u);
  EXPECT_TRUE(c.is_null("forecaster.lambda"));
  EXPECT_EQ(parse_config_text(c.dump()), c);
  EXPECT_EQ(parse_config_text(R"({"layout.n": 300, "alpha": 0.2})"), c);
}

TEST(Config, ReportsEveryViolation) {
  try {
    parse_config_text(R"({"alpha": 1.5, "layout": {"n_tr": "forty"}, "bogus": 1})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 3u);
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"layout": {"n": 20}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"qfcv": {"m": 6}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"eval": {"methods": ["magic"]}})"), ConfigError);
}

TEST(Config, OverridesTakePrecedence) {
  const RunConfig c = parse_config_text(R"({"alpha": 0.2})", {"alpha=0.05", "layout.scheme=expanding",
                                                             "sim.phi=[0.9]"});
  EXPECT_EQ(c.get<double>("alpha"), 0.05);
  EXPECT_EQ(scheme_of(c), WindowScheme::expanding);
  EXPECT_EQ(c.get<std::vector<double>>("sim.phi"), (std::vector<double>{0.9}));
  EXPECT_THROW(parse_override("noequals"), ConfigError);
}

TEST(Config, MethodNames) {
  const FcvConfig f;
  EXPECT_EQ(method_from_name("qfcv3", f).aux.m, 3u);
  EXPECT_EQ(method_from_name("qfcv1_span2", f).memory_span, 2u);
  EXPECT_EQ(method_from_name("qfcv1_span2", f).name, "qfcv1_span2");
  EXPECT_EQ(method_from_name("fcv_c", f).fcv.variant, FcvVariant::autocov);
  EXPECT_EQ(method_from_name("oracle", f).kind, MethodSpec::Kind::oracle);
  EXPECT_THROW(method_from_name("qfcvx", f), ConfigError);
}

TEST(Csv, ReadsAndReemitsIdentically) {
  const std::string text = "t,x1,x2,y\n1,0.5,-1,2\n2,1e-3,3.25,0\n5,7,8,-0.125\n";
  std::istringstream in(text);
  const TimedSeries d = read_series_csv(in);
  EXPECT_EQ(d.series.size(), 3u);
  EXPECT_EQ(d.series.dim(), 2u);
  EXPECT_EQ(d.t, (std::vector<std::int64_t>{1, 2, 5}));
  EXPECT_EQ(d.series.at(3).y, -0.125);
  std::ostringstream out;
  write_series_csv(out, d.series, d.t);
  EXPECT_EQ(out.str(), "t,x1,x2,y\n1,0.5,-1,2\n2,0.001,3.25,0\n5,7,8,-0.125\n");
  std::istringstream again(out.str());
  const TimedSeries d2 = read_series_csv(again);
  for (std::size_t t = 1; t <= 3; ++t) EXPECT_EQ(d2.series.at(t).x, d.series.at(t).x);
}

TEST(Csv, ErrorsNameTheRow) {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_series_csv(in);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("t,x1,y\n1,2,3\n2,,4\n").find("row 2"), std::string::npos);
  EXPECT_NE(message("t,x1,y\n1,2,3\n2,abc,4\n").find("non-numeric"), std::string::npos);
  EXPECT_NE(message("t,x1,y\n2,2,3\n2,1,4\n").find("not greater"), std::string::npos);
  EXPECT_NE(message("t,x1,y\n1,2\n").find("cells"), std::string::npos);
  EXPECT_NE(message("time,x1,y\n").find("header"), std::string::npos);
  EXPECT_NE(message("t,y\n").find("no data"), std::string::npos);
}

TEST(Cli, SimulateThenAnalyzeFile) {
  const auto path = temp_file("sim.csv");
  const CliResult sim = run_cli({"simulate", "-s", "layout.n=300", "-s", "sim.p=5", "--seed", "4",
                                 "-o", path.string()});
  ASSERT_EQ(sim.code, 0) << sim.err;
  const CliResult q = run_cli({"qfcv", "-i", path.string(), "-s", "sim.p=5"});
  ASSERT_EQ(q.code, 0) << q.err;
  EXPECT_NE(q.out.find("# qfcv qfcv"), std::string::npos);
  const auto lines = data_lines(q.out);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "method,n,K,lo,hi,point,nominal_level");
  EXPECT_EQ(lines[1].rfind("qfcv1,300,", 0), 0u);
  const CliResult f = run_cli({"fcv", "-i", path.string(), "-s", "fcv.variant=scaling"});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(data_lines(f.out)[1].rfind("fcv_p,300,", 0), 0u);
  std::filesystem::remove(path);
}

TEST(Cli, AqfcvColumns) {
  const CliResult r = run_cli({"aqfcv", "-s", "layout.n=400", "-s", "layout.spacing=5", "-s", "sim.p=5",
                               "-s", "forecaster.kind=ridge", "-s", "aci.first_origin=200"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = data_lines(r.out);
  EXPECT_EQ(lines[0], "t,lo,hi,err_sto,covered,theta");
  EXPECT_EQ(lines.size(), 1u + 40u);  // origins 200..395
  EXPECT_NE(r.err.find("time-average coverage"), std::string::npos);
}

TEST(Cli, EvaluateIsDeterministic) {
  const std::vector<std::string> args{"evaluate", "-s", "layout.n=120", "-s", "sim.p=5",
                                      "-s", "eval.replications=6", "-s", "eval.oracle_draws=100",
                                      "-s", R"(eval.methods=["qfcv1","fcv","oracle"])", "--seed", "2"};
  const CliResult a = run_cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto lines = data_lines(a.out);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1].rfind("qfcv1,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("oracle,", 0), 0u);
  EXPECT_EQ(run_cli(args).out, a.out);
  auto threaded = args;
  threaded.push_back("-j");
  threaded.push_back("3");
  const CliResult b = run_cli(threaded);
  EXPECT_EQ(data_lines(b.out), lines);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"qfcv", "-s", "alpha=1.5"}).code, cli::validation_error);
  EXPECT_EQ(run_cli({"nonsense"}).code, cli::validation_error);
  EXPECT_EQ(run_cli({"qfcv", "-i", "/nonexistent/file.csv"}).code, cli::validation_error);
  const CliResult fail = run_cli({"evaluate", "-s", "layout.n=60", "-s", "layout.spacing=5",
                                  "-s", "sim.p=5", "-s", "qfcv.m=2",
                                  "-s", "eval.replications=2", "-s", "eval.oracle_draws=100",
                                  "-s", R"(eval.methods=["qfcv2"])"});
  EXPECT_EQ(fail.code, cli::runtime_error);
  EXPECT_NE(fail.err.find("failed"), std::string::npos);
  EXPECT_EQ(run_cli({"simulate", "--help"}).code, cli::ok);
}
