#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "mcrs/cli.hpp"

namespace fs = std::filesystem;
using namespace mcrs;
using namespace mcrs::testing;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mcrs_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mcrs_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TransformDiffLogOfExponentials) {
  const double e = std::exp(1.0);
  std::ostringstream csv;
  csv.precision(17);
  csv << "date,a,b\n2000-01,1,5\n2000-02," << e << ",5\n2000-03," << e * e << ",5\n";
  spit(path("in.csv"), csv.str());
  const auto r = cli({"transform", "--input", path("in.csv"), "--output", path("out.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const SeriesData sd = read_series_csv(path("out.csv"));
  ASSERT_EQ(sd.x.rows(), 2);
  EXPECT_NEAR(sd.x(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(sd.x(1, 0), 1.0, 1e-12);
  EXPECT_EQ(sd.x(0, 1), 0.0);
  EXPECT_EQ(sd.x(1, 1), 0.0);
  ASSERT_TRUE(sd.date_name);
  EXPECT_EQ(sd.dates, (std::vector<std::string>{"2000-02", "2000-03"}));
}

TEST_F(CliTest, TransformRejectsNonPositiveValues) {
  spit(path("in.csv"), "a,b\n1,2\n0,3\n");
  const auto r = cli({"transform", "--input", path("in.csv"), "--output", path("out.csv")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("'a'"), std::string::npos) << r.err;
}

TEST_F(CliTest, TransformPlainDifference) {
  spit(path("in.csv"), "a\n1\n-2\n4\n");
  ASSERT_EQ(cli({"transform", "--input", path("in.csv"), "--output", path("out.csv"), "--mode", "diff"}).code, kExitOk);
  const SeriesData sd = read_series_csv(path("out.csv"));
  EXPECT_EQ(sd.x(0, 0), -3.0);
  EXPECT_EQ(sd.x(1, 0), 6.0);
}

TEST_F(CliTest, UsageErrors) {
  spit(path("in.csv"), "a\n1\n2\n3\n");
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"transform", "--input", path("in.csv")}).code, kExitUsage);
  EXPECT_EQ(cli({"transform", "--input", path("in.csv"), "--output", path("o.csv"), "--mode", "ratio"}).code, kExitUsage);
  EXPECT_EQ(cli({"fit", "--input", path("in.csv"), "--output", path("m.json"), "--mode", "guess"}).code, kExitUsage);
  EXPECT_EQ(cli({"fit", "--input", path("in.csv"), "--output", path("m.json")}).code, kExitUsage);
  EXPECT_EQ(cli({"scan", "--input", path("in.csv"), "--output", path("s.csv"), "--order", "3-1"}).code, kExitUsage);
}

TEST_F(CliTest, MissingInputIsDataError) {
  EXPECT_EQ(cli({"transform", "--input", path("absent.csv"), "--output", path("o.csv")}).code, kExitData);
}

TEST_F(CliTest, ModelJsonRoundTrip) {
  const RegimeModel m = design_model();
  write_model(path("m.json"), m);
  const RegimeModel back = read_model(path("m.json"));
  EXPECT_EQ(model_to_json(back), model_to_json(m));
  EXPECT_EQ(back.orders, m.orders);
  EXPECT_EQ(back.switch_rho, m.switch_rho);
  EXPECT_EQ(max_abs_diff(back.chain.transition, m.chain.transition), 0.0);
}

TEST_F(CliTest, SimulateIsDeterministicPerSeed) {
  write_model(path("m.json"), example1_model());
  auto run = [&](const std::string& out, const std::string& seed) {
    return cli({"simulate", "--model", path("m.json"), "--output", path(out), "--length", "200", "--seed", seed}).code;
  };
  ASSERT_EQ(run("a.csv", "7"), kExitOk);
  ASSERT_EQ(run("b.csv", "7"), kExitOk);
  ASSERT_EQ(run("c.csv", "8"), kExitOk);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
  const SeriesData sd = read_series_csv(path("a.csv"));
  EXPECT_EQ(sd.x.rows(), 200);
  EXPECT_EQ(sd.x.cols(), 2);
  ASSERT_TRUE(sd.regimes);
  EXPECT_EQ(cli({"simulate", "--model", path("m.json"), "--output", path("z.csv"), "--length", "0"}).code, kExitUsage);
}

TEST_F(CliTest, FitExternalThenInfer) {
  RegimeModel m = example1_model();
  m.chain.transition = mat({{0.97, 0.03}, {0.03, 0.97}});
  m.margins[1] = {MarginParams{3, 1, 1e4, 1e4}, MarginParams{3, 1, 1e4, 1e4}};
  write_model(path("true.json"), m);
  ASSERT_EQ(cli({"simulate", "--model", path("true.json"), "--output", path("s.csv"), "--length", "300", "--seed", "3"}).code,
            kExitOk);
  const auto f = cli({"fit", "--input", path("s.csv"), "--output", path("fit.json"), "--order", "2"});
  ASSERT_EQ(f.code, kExitOk) << f.err;
  const auto report = nlohmann::json::parse(f.out);
  EXPECT_EQ(report["mode"], "external");
  EXPECT_EQ(report["likelihood"], "complete");
  EXPECT_NEAR(report["aic"].get<double>(), 2.0 * report["params"]["total"].get<double>() - 2.0 * report["loglik"].get<double>(),
              1e-6);

  const auto inf = cli({"infer", "--input", path("s.csv"), "--model", path("fit.json"), "--output", path("p.csv"), "--tau", "1"});
  ASSERT_EQ(inf.code, kExitOk) << inf.err;
  std::ifstream in(path("p.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,p1,p2,regime");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 300u);
  EXPECT_EQ(cli({"infer", "--input", path("s.csv"), "--model", path("fit.json"), "--output", path("p.csv"), "--tau", "9"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"infer", "--input", path("s.csv"), "--model", path("fit.json"), "--output", path("p.csv"), "--xi", "1.5"}).code,
            kExitUsage);
}

TEST_F(CliTest, InferSingleRegimeGivesCertainty) {
  write_model(path("m.json"), RegimeModel::independent(1, 2, 1));
  spit(path("s.csv"), "a,b\n0.1,0.2\n-0.3,0.5\n1.2,-0.7\n0.0,0.4\n");
  const auto r = cli({"infer", "--input", path("s.csv"), "--model", path("m.json"), "--output", path("p.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["switches"], 0);
  std::ifstream in(path("p.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cells = detail::split_csv_line(line);
    ASSERT_EQ(cells.size(), 3u);
    EXPECT_NEAR(std::stod(cells[1]), 1.0, 1e-12);
    EXPECT_EQ(cells[2], "1");
  }
}

TEST_F(CliTest, InferDimensionMismatchIsDataError) {
  write_model(path("m.json"), RegimeModel::independent(2, 3, 0));
  spit(path("s.csv"), "a,b\n0.1,0.2\n-0.3,0.5\n");
  EXPECT_EQ(cli({"infer", "--input", path("s.csv"), "--model", path("m.json"), "--output", path("p.csv")}).code, kExitData);
}

TEST_F(CliTest, ScanIsReproducibleAndReportsFailedCells) {
  write_model(path("m.json"), example1_model());
  ASSERT_EQ(cli({"simulate", "--model", path("m.json"), "--output", path("s.csv"), "--length", "40", "--seed", "5"}).code, kExitOk);
  const std::vector<std::string> args = {"scan", "--input", path("s.csv"), "--order", "0,1,30"};
  auto a = args, b = args;
  a.insert(a.end(), {"--output", path("a.csv")});
  b.insert(b.end(), {"--output", path("b.csv")});
  ASSERT_EQ(cli(a).code, kExitOk);
  ASSERT_EQ(cli(b).code, kExitOk);
  const std::string table = slurp(path("a.csv"));
  EXPECT_EQ(table, slurp(path("b.csv")));

  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "regimes,order,loglik,params,aic,status");
  std::size_t ok = 0, failed = 0;
  while (std::getline(in, line)) {
    const auto cells = detail::split_csv_line(line);
    ASSERT_EQ(cells.size(), 6u);
    (cells[5] == "ok" ? ok : failed)++;
    if (cells[1] == "30") {
      EXPECT_NE(cells[5], "ok");
    }
  }
  EXPECT_EQ(ok, 2u);
  EXPECT_EQ(failed, 1u);
}
