#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "panet/image_io.hpp"
#include "panet/random.hpp"
#include "support.hpp"

using namespace panet;
using panet::cli::run_cli;
using panet::test::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "panet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) ++n;
  return n;
}

// A small but real run directory shared by the tests below: fixture data and
// a 2-step tiny-model checkpoint.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto d = dir_->path().string();
    ASSERT_EQ(run({"synth-data", "--seed", "1", "--count", "2", "--size", "32", "--out", d + "/data"}).code, 0);
    std::ofstream(dir_->path() / "tiny.cfg") << "model.fce_channels = 8,8,16,16,24,24,32,32\n"
                                                "model.decoder_channels = 32,24,16,16,8,8,8\n"
                                                "model.branch_grids = 3\n"
                                                "model.capm_channels = 4\n"
                                                "model.spp_bins = 4\n"
                                                "model.generator_hidden = 32,64\n"
                                                "model.generator_groups = 4,4,4\n"
                                                "model.disc_channels = 8,16,32,64\n";
    const auto r = run({"train", "--data", d + "/data/manifest.csv", "--out", d + "/run", "--config", d + "/tiny.cfg",
                        "--steps", "2", "--log-every", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& rel) { return (dir_->path() / rel).string(); }

  static TempDir* dir_;
};

TempDir* CliTest::dir_ = nullptr;

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"synth-data", "--out", "/tmp/x", "--bogus"}).code, 2);
  EXPECT_EQ(run({"synth-data", "--size", "63", "--out", "/tmp/never"}).code, 2);
  EXPECT_EQ(run({"train", "--out", "/tmp/never"}).code, 2);
  EXPECT_EQ(run({"gradcheck", "--corrupt", "softmax"}).code, 2);
}

TEST(Cli, HelpListsFlags) {
  const auto r = run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--data", "--out", "--config", "--set", "--ablation", "--resume", "--seed", "--steps"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, MissingManifestIsIoError) {
  TempDir d("climiss");
  EXPECT_EQ(run({"train", "--data", (d / "none.csv").string(), "--out", (d / "r").string()}).code, 3);
}

TEST(Cli, UnknownOverrideKeyNamed) {
  TempDir d("clikey");
  ASSERT_EQ(run({"synth-data", "--count", "1", "--size", "32", "--out", d.path().string()}).code, 0);
  const auto r = run({"train", "--data", (d / "manifest.csv").string(), "--out", (d / "r").string(), "--set",
                      "model.wings=2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.wings"), std::string::npos);
}

TEST_F(CliTest, SynthDataIsDeterministic) {
  const auto again = path("data2");
  ASSERT_EQ(run({"synth-data", "--seed", "1", "--count", "2", "--size", "32", "--out", again}).code, 0);
  EXPECT_EQ(read_file_bytes(path("data/photo_001.png")), read_file_bytes(again + "/photo_001.png"));
  EXPECT_EQ(count_lines(path("data/manifest.csv")), 3u);
}

TEST_F(CliTest, TrainWritesArtifacts) {
  EXPECT_TRUE(std::filesystem::exists(path("run/final.ckpt")));
  EXPECT_EQ(count_lines(path("run/loss.csv")), 3u);
}

TEST_F(CliTest, InferKeepsArbitraryInputSize) {
  save_image(rand_uniform_seeded<float>({3, 61, 77}, 0, 1, 5), path("odd.png"));
  const auto r = run({"infer", "--checkpoint", path("run/final.ckpt"), "--input", path("odd.png"), "--out", path("pred")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto sketch = load_image(path("pred/odd.png"));
  EXPECT_EQ(sketch.shape(), (Shape{1, 61, 77}));
}

TEST_F(CliTest, InferRejectsBadCheckpoints) {
  auto bytes = read_file_bytes(path("run/final.ckpt"));
  bytes[bytes.size() / 2] ^= 0x01;
  write_file_bytes(path("bad.ckpt"), bytes);
  const auto r = run({"infer", "--checkpoint", path("bad.ckpt"), "--input", path("data/photo_000.png"), "--out", path("p")});
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(run({"infer", "--checkpoint", path("none.ckpt"), "--input", path("data"), "--out", path("p")}).code, 5);
}

TEST_F(CliTest, EvalIdentityAndMismatch) {
  std::filesystem::create_directories(path("gt"));
  std::filesystem::copy_file(path("data/sketch_000.png"), path("gt/a.png"));
  std::filesystem::copy_file(path("data/sketch_001.png"), path("gt/b.png"));
  const auto r = run({"eval", "--pred", path("gt"), "--gt", path("gt"), "--out", path("ev")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Scoot 100.00"), std::string::npos) << r.out;
  EXPECT_EQ(count_lines(path("ev/metrics.csv")), 4u);
  EXPECT_EQ(run({"eval", "--pred", path("gt"), "--gt", path("data")}).code, 3);
}

TEST_F(CliTest, InspectEmits729Locations) {
  const auto r = run({"inspect", "--checkpoint", path("run/final.ckpt"), "--input", path("data/photo_000.png"),
                      "--pixel", "10,12", "--out", path("ins")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("729"), std::string::npos);
  EXPECT_EQ(count_lines(path("ins/locations.csv")), 730u);
  EXPECT_EQ(load_image(path("ins/fapd_mean.png")).shape(), (Shape{1, 32, 32}));
  EXPECT_TRUE(std::filesystem::exists(path("ins/capm_branch1_mean.png")));
  EXPECT_TRUE(std::filesystem::exists(path("ins/offsets.png")));
  EXPECT_EQ(run({"inspect", "--checkpoint", path("run/final.ckpt"), "--input", path("data/photo_000.png"), "--pixel",
                 "32,0", "--out", path("ins")})
                .code,
            2);
  EXPECT_EQ(run({"inspect", "--input", path("data/photo_000.png"), "--pixel", "-1,3", "--out", path("ins")}).code, 2);
}

TEST_F(CliTest, ResumeRequiresMatchingSeed) {
  const auto r = run({"train", "--data", path("data/manifest.csv"), "--out", path("run2"), "--resume",
                      path("run/final.ckpt"), "--steps", "3", "--log-every", "0"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(path("run2/loss.csv")), 2u);
  const auto bad = run({"train", "--data", path("data/manifest.csv"), "--out", path("run3"), "--resume",
                        path("run/final.ckpt"), "--steps", "3", "--seed", "99"});
  EXPECT_EQ(bad.code, 5) << bad.err;
}
