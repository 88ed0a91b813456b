#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "loopspace/cli.hpp"

namespace loopspace {
namespace {

namespace fs = std::filesystem;
using cli::RunConfig;
using cli::Status;

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("loopspace_cli_" +
            std::string(::testing::UnitTest::GetInstance()
                            ->current_test_info()
                            ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string put(const std::string &name, const std::string &contents) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << contents;
    return p.string();
  }
  std::string path(const std::string &name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string two_segment() {
    return put("a.json", R"({"space":{"kind":"finite","labels":["x","y"],)"
                         R"("dist":[[0,1],[1,0]]},)"
                         R"("word":[{"state":"x","hold":1.0},)"
                         R"({"state":"y","hold":2.0}]})");
  }

  fs::path dir_;
};

TEST_F(CliTest, OccupationPrintsFixedDecimal) {
  RunConfig c;
  c.command = "occupation";
  c.loop = two_segment();
  c.pattern = "x,y";
  const auto r = cli::run(c);
  EXPECT_EQ(r.status, Status::ok);
  EXPECT_EQ(r.report, "2.000000000\n");
}

TEST_F(CliTest, OccupationWithoutPatternListsTotals) {
  RunConfig c;
  c.command = "occupation";
  c.loop = two_segment();
  const auto r = cli::run(c);
  EXPECT_EQ(r.report, "x: 1.000000000\ny: 2.000000000\ntotal: 3.000000000\n");
}

TEST_F(CliTest, BoxPatternOverEuclideanLoop) {
  RunConfig c;
  c.command = "occupation";
  c.loop = put("p.json", R"({"space":{"kind":"euclidean","dim":2},"word":[)"
                         R"({"state":[0.1,0.2],"hold":1},)"
                         R"({"state":[0.8,0.3],"hold":2}]})");
  c.pattern = "0,0:0.5,0.5; 0.5,0:1,1";
  const auto r = cli::run(c);
  ASSERT_EQ(r.status, Status::ok) << r.error;
  EXPECT_EQ(r.report, "2.000000000\n");
}

TEST_F(CliTest, QuotientDistanceOfRotatedLoopIsZero) {
  RunConfig c;
  c.command = "distance";
  c.a = two_segment();
  c.b = put("b.json", R"({"space":{"kind":"finite","labels":["x","y"],)"
                      R"("dist":[[0,1],[1,0]]},"phase":0.7,)"
                      R"("word":[{"state":"y","hold":2.0},)"
                      R"({"state":"x","hold":1.0}]})");
  c.quotient = true;
  c.witness = path("w.json");
  c.format = "json";
  const auto r = cli::run(c);
  ASSERT_EQ(r.status, Status::ok) << r.error;
  const auto report = io::json::parse(r.report);
  EXPECT_LE(report["value"].get<double>(), 1e-6);
  const auto w = io::json::parse(slurp(c.witness));
  EXPECT_TRUE(w.contains("offset"));
  EXPECT_GE(w["breakpoints"].size(), 2u);
}

TEST_F(CliTest, BasedDistanceSeesDifferentBasepoints) {
  RunConfig c;
  c.command = "distance";
  c.a = two_segment();
  c.b = put("b.json", R"({"space":{"kind":"finite","labels":["x","y"],)"
                      R"("dist":[[0,1],[1,0]]},"phase":0.5,)"
                      R"("word":[{"state":"y","hold":2.0},)"
                      R"({"state":"x","hold":1.0}]})");
  const auto r = cli::run(c);
  ASSERT_EQ(r.status, Status::ok) << r.error;
  EXPECT_EQ(r.report, "1.000000000\n");
}

TEST_F(CliTest, MalformedLoopNamesTheField) {
  RunConfig c;
  c.command = "occupation";
  c.loop = put("bad.json", R"({"space":{"kind":"finite","labels":["x","y"]},)"
                           R"("word":[{"state":"x","hold":1},{"state":"y"}]})");
  const auto r = cli::run(c);
  EXPECT_EQ(r.status, Status::invalid);
  EXPECT_NE(r.error.find("word[1]"), std::string::npos) << r.error;
  EXPECT_NE(r.error.find("hold"), std::string::npos) << r.error;
  EXPECT_TRUE(r.report.empty());
}

TEST_F(CliTest, InvalidJsonAndMissingFilesFail) {
  RunConfig c;
  c.command = "occupation";
  c.loop = put("bad.json", "{not json");
  EXPECT_EQ(cli::run(c).status, Status::invalid);
  c.loop = path("missing.json");
  EXPECT_EQ(cli::run(c).status, Status::invalid);
}

TEST_F(CliTest, FailureLeavesNoOutputFile) {
  RunConfig c;
  c.command = "reconstruct";
  c.loop = put("l.json", R"({"space":{"kind":"finite","labels":["x","y","z"]},)"
                         R"("word":[{"state":"x","hold":1},{"state":"y","hold":1},)"
                         R"({"state":"x","hold":2},{"state":"z","hold":1}]})");
  c.qmax = 3;
  c.out = path("rec.json");
  const auto r = cli::run(c);
  EXPECT_EQ(r.status, Status::invalid);
  EXPECT_NE(r.error.find("best residual"), std::string::npos);
  EXPECT_FALSE(fs::exists(c.out));
  EXPECT_FALSE(fs::exists(c.out + ".tmp"));
}

TEST_F(CliTest, ReconstructFromTable) {
  RunConfig c;
  c.command = "reconstruct";
  // Field of [(x,1),(y,2)] up to length 2.
  c.table = put("t.json", R"([{"pattern":["x"],"value":1.0},)"
                          R"({"pattern":["y"],"value":2.0},)"
                          R"({"pattern":["x","x"],"value":1.0},)"
                          R"({"pattern":["y","y"],"value":4.0},)"
                          R"({"pattern":["x","y"],"value":2.0}])");
  c.out = path("rec.json");
  c.format = "json";
  const auto r = cli::run(c);
  ASSERT_EQ(r.status, Status::ok) << r.error;
  const io::LoopFile f = io::read_loop_file(c.out);
  ASSERT_EQ(f.loop.size(), 2u);
  EXPECT_NEAR(f.loop.duration(), 3.0, 1e-9);
}

TEST_F(CliTest, DiscretizeWritesLoopAndSidecar) {
  RunConfig c;
  c.command = "discretize";
  c.loop = put("p.json", R"({"space":{"kind":"euclidean","dim":1},"word":[)"
                         R"({"state":[0.0],"hold":1},{"state":[0.05],"hold":1},)"
                         R"({"state":[1.0],"hold":2}]})");
  c.eps = 0.5;
  c.out = path("ind.json");
  const auto r = cli::run(c);
  ASSERT_EQ(r.status, Status::ok) << r.error;
  const io::LoopFile f = io::read_loop_file(c.out);
  EXPECT_EQ(f.loop.size(), 2u);
  const auto side = io::json::parse(slurp(c.out + ".report.json"));
  EXPECT_TRUE(side["trace_identity"]["holds"].get<bool>());
  EXPECT_DOUBLE_EQ(side["t_eps"].get<double>(), 4.0);
  EXPECT_EQ(side["cells"].size(), 2u);
}

TEST_F(CliTest, DiscretizeConvergenceNeedsSecondLoop) {
  RunConfig c;
  c.command = "discretize";
  c.loop = two_segment();
  c.eps = 0.5;
  c.eps_ladder = "0.5,0.25";
  EXPECT_EQ(cli::run(c).status, Status::invalid);
}

TEST_F(CliTest, VerifyInjectivityReportsZeroUnseparated) {
  RunConfig c;
  c.command = "verify";
  c.suite = "injectivity";
  c.trials = 60;
  c.seed = 42;
  c.format = "json";
  const auto r = cli::run(c);
  ASSERT_EQ(r.status, Status::ok) << r.error;
  const auto j = io::json::parse(r.report);
  EXPECT_EQ(j["suites"][0]["unseparated_pairs"].get<int>(), 0);
  EXPECT_EQ(j["suites"][0]["trials"].get<int>(), 60);
  EXPECT_EQ(j["suites"][0]["property"].get<std::string>(),
            "equal fields imply equal loops up to rotation");
}

TEST_F(CliTest, VerifyFindingsExitWithTwo) {
  RunConfig c;
  c.command = "verify";
  c.suite = "invariance";
  c.trials = 20;
  // Rounding noise alone exceeds a zero-width tolerance somewhere.
  c.tol = 1e-300;
  const auto r = cli::run(c);
  EXPECT_EQ(r.status, Status::findings);
  EXPECT_NE(r.report.find("FAIL invariance"), std::string::npos);
}

TEST_F(CliTest, UnknownInputsAreRejected) {
  RunConfig c;
  c.command = "transmogrify";
  EXPECT_EQ(cli::run(c).status, Status::invalid);
  c.command = "verify";
  c.suite = "nothing";
  EXPECT_EQ(cli::run(c).status, Status::invalid);
  c.suite = "all";
  c.format = "xml";
  EXPECT_EQ(cli::run(c).status, Status::invalid);
}

TEST_F(CliTest, GenerateIsSeedDeterministic) {
  RunConfig c;
  c.command = "generate";
  c.segments = 5;
  c.seed = 3;
  const auto r1 = cli::run(c);
  const auto r2 = cli::run(c);
  EXPECT_EQ(r1.report, r2.report);
  c.seed = 4;
  EXPECT_NE(cli::run(c).report, r1.report);
  const auto j = io::json::parse(r1.report);
  EXPECT_EQ(io::parse_loop(j).loop.size(), 5u);
}

TEST(PatternText, RoundTrips) {
  const auto space = StateSpace::discrete({"x", "y"});
  const Pattern p = io::parse_pattern(*space, " x , y,x ");
  EXPECT_EQ(p.size(), 3u);
  EXPECT_EQ(io::pattern_to_text(*space, p), "x,y,x");
  EXPECT_THROW(io::parse_pattern(*space, "x,q"), validation_error);

  const auto plane = StateSpace::euclidean(2);
  const Pattern b = io::parse_pattern(*plane, "0,0:1,1; 2,0:3,1");
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(io::pattern_to_text(*plane, b), "0,0:1,1; 2,0:3,1");
  EXPECT_THROW(io::parse_pattern(*plane, "0,0:1"), validation_error);
  EXPECT_THROW(io::parse_pattern(*plane, "1,0:0,1"), validation_error);
}

TEST(LoopJson, RoundTripsThroughText) {
  const auto plane = StateSpace::euclidean(2);
  const Loop l(plane, {{Point{0.25, 1.0 / 3.0}, 0.1}, {Point{2.0, -1.0}, 7.5}});
  const auto j = io::loop_to_json(l, 0.05);
  const io::LoopFile back = io::parse_loop(io::json::parse(j.dump()));
  ASSERT_TRUE(back.phase);
  EXPECT_EQ(*back.phase, 0.05);
  EXPECT_TRUE(equals_up_to_rotation(back.loop, l, 1e-15).equal);
  EXPECT_EQ(std::get<Point>(back.loop[0].state)[1], 1.0 / 3.0);
}

TEST(LoopJson, DefaultDistanceIsDiscrete) {
  const auto j = io::json::parse(
      R"({"space":{"kind":"finite","labels":["a","b","c"]},)"
      R"("word":[{"state":"a","hold":1},{"state":"c","hold":1}]})");
  const auto f = io::parse_loop(j);
  EXPECT_EQ(f.loop.space().distance(LabelId{0}, LabelId{2}), 1.0);
  EXPECT_FALSE(f.phase);
}

} // namespace
} // namespace loopspace
