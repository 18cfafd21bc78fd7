#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xtime/cli.hpp"

using namespace xtime;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("xtime_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, CountParams) {
  auto r = run_cli({"count-params", "--variant", "base"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("total\t413516"), std::string::npos);
  EXPECT_NE(r.out.find("module1.bottleneck\t176"), std::string::npos);
  auto v2 = run_cli({"count-params", "--variant", "v2"});
  EXPECT_NE(v2.out.find("total\t1918476"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"count-params", "--variant", "v3"}).code, 1);
  EXPECT_EQ(run_cli({"synth"}).code, 1);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  auto r = run_cli({"preprocess", "--in", path("missing.csv"), "--out", path("w.bin")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.csv"), std::string::npos);
  std::ofstream(path("bad.csv")) << "emg0,stimulus,repetition\n1,1,1\n";
  EXPECT_EQ(run_cli({"preprocess", "--in", path("bad.csv"), "--out", path("w.bin")}).code, 2);
}

TEST_F(CliTest, EndToEndPipeline) {
  ASSERT_EQ(run_cli({"synth", "--classes", "3", "--reps", "4", "--gesture-s", "1", "--rest-s", "0.5", "--out",
                     path("rec.csv")})
                .code,
            0);
  auto p = run_cli({"preprocess", "--in", path("rec.csv"), "--out", path("w.bin"), "--step-ms", "50", "--test-reps",
                    "2"});
  ASSERT_EQ(p.code, 0) << p.err;
  auto p2 = run_cli({"preprocess", "--in", path("rec.csv"), "--out", path("w100.bin"), "--window-ms", "100",
                     "--step-ms", "50", "--test-reps", "2"});
  ASSERT_EQ(p2.code, 0) << p2.err;
  auto t = run_cli({"train", "--data", path("w.bin") + "," + path("w100.bin"), "--out", path("model.ckpt"),
                    "--epochs", "2", "--log-test"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto log = read_file(path("model.ckpt.metrics.tsv"));
  EXPECT_EQ(log.rfind("epoch\tsplit\tloss\taccuracy\tlr\n", 0), 0u);
  EXPECT_NE(log.find("test@100ms"), std::string::npos);
  auto e = run_cli({"eval", "--ckpt", path("model.ckpt"), "--data", path("w.bin"), "--report", path("report.tsv")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("accuracy: "), std::string::npos);
  const auto report = read_file(path("report.tsv"));
  EXPECT_NE(report.find("confusion"), std::string::npos);
  EXPECT_NE(report.find("class\tsupport\taccuracy"), std::string::npos);
  auto loaded = load_checkpoint(path("model.ckpt"));
  EXPECT_EQ(loaded.metadata.at("prep.norm"), "mu-law");
  EXPECT_EQ(loaded.metadata.at("train.window_ms"), "200,100");
}

TEST_F(CliTest, ConfigFileOverridesDefaults) {
  std::ofstream(path("cfg.ini")) << "[synth]\nclasses = 2\nreps = 2\ngesture-s = 0.5\nrest-s = 0.2\n";
  auto r = run_cli({"--config", path("cfg.ini"), "synth", "--out", path("rec.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rec = load_record(path("rec.csv"));
  EXPECT_EQ(rec.samples(), 2u * 2 * 70);
}

TEST_F(CliTest, TrainRunsAreByteIdentical) {
  ASSERT_EQ(run_cli({"synth", "--classes", "2", "--reps", "3", "--gesture-s", "0.6", "--rest-s", "0.2", "--out",
                     path("rec.csv")})
                .code,
            0);
  ASSERT_EQ(run_cli({"preprocess", "--in", path("rec.csv"), "--out", path("w.bin"), "--step-ms", "100",
                     "--test-reps", "2"})
                .code,
            0);
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(run_cli({"train", "--data", path("w.bin"), "--out", path(name), "--epochs", "2", "--seed", "7"}).code,
              0);
  }
  EXPECT_EQ(read_file(path("a.metrics.tsv")), read_file(path("b.metrics.tsv")));
  EXPECT_EQ(read_file(path("a")), read_file(path("b")));
}

TEST(GradcheckSuite, ReportsInjectedFault) {
  GradCheckCase faulty{"faulty square", [] {
                         Tensor x({3}, {0.5, 1.0, 2.0}, true);
                         LossFn f = [&](Tape* t) {
                           Tensor y = sum(mul(x, x, t), t);
                           if (t) t->record([x] { x.grad()[1] += 0.25; });
                           return y;
                         };
                         return grad_check_tensors(f, {{"x", x}});
                       }};
  std::ostringstream os;
  EXPECT_FALSE(run_gradcheck_suite({faulty}, 1e-4, os));
  EXPECT_NE(os.str().find("FAIL  faulty square"), std::string::npos);
}

TEST(GradcheckSuite, CliPassesOnCorrectGradients) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::run({"gradcheck", "--seed", "3", "--samples", "5"}, out, err), 0) << out.str();
  EXPECT_NE(out.str().find("PASS  gradient check"), std::string::npos);
}
