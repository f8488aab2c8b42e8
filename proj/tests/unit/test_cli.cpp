#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "staa/staa.hpp"

using namespace staa;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() / ("staa_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  // Runs the binary inside `dir`; returns the exit status and captures stdout.
  int run(const std::string& args, std::string* out = nullptr) {
    const auto log = dir / "stdout.txt";
    const std::string cmd = "cd '" + dir.string() + "' && '" STAA_CLI_PATH "' " + args + " > '" + log.string() + "' 2>/dev/null";
    const int status = std::system(cmd.c_str());
    if (out) {
      std::ifstream in(log);
      *out = std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    fs::remove(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string video(Shape s, const std::string& name, Rational fps = {30, 1}) {
    std::mt19937_64 rng(s[1]);
    const auto path = dir / name;
    write_stv(VideoVolume(Tensor<float>::uniform(std::move(s), 0.0f, 255.0f, rng), fps), path);
    return path.string();
  }

  std::string checkpoint(const Model& m, const std::string& name) {
    const auto path = dir / name;
    save_checkpoint(to_checkpoint(m, 0), path);
    return path.string();
  }
};

UpscaleConfig tiny(Rational r, std::size_t s) {
  UpscaleConfig c;
  c.r = r;
  c.s = s;
  c.features = 4;
  c.rdb_blocks = 1;
  c.rdb_layers = 1;
  c.growth = 4;
  return c;
}

}  // namespace

TEST_F(Cli, HelpExitsZeroWithoutFiles) {
  for (const char* sub : {"", "downsample", "upscale", "train", "train-blur", "analyze", "metrics", "convert-fps",
                          "inspect-checkpoint"}) {
    std::string out;
    EXPECT_EQ(run(std::string(sub) + " --help", &out), 0) << sub;
    EXPECT_NE(out.find("Usage"), std::string::npos) << sub;
  }
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("downsample --in a --out b --bogus"), 2);
  EXPECT_EQ(run("downsample --out b"), 2);
  EXPECT_EQ(run("downsample --in " + video({3, 4, 8, 8}, "v.stv") + " --out o.stv --filter lanczos"), 2);
}

TEST_F(Cli, DownsampleNearestHalvesFrames) {
  const auto in = video({3, 8, 16, 16}, "in.stv", {60, 1});
  ASSERT_EQ(run("downsample --in " + in + " --out out.stv --filter nearest --rt 2 --rs 1"), 0);
  const auto v = read_stv(dir / "out.stv");
  EXPECT_EQ(v.data.shape(), (Shape{3, 4, 16, 16}));
  EXPECT_EQ(v.fps, Rational(30, 1));
}

TEST_F(Cli, MissingCheckpointIsIoError) {
  const auto in = video({3, 4, 8, 8}, "in.stv");
  EXPECT_EQ(run("downsample --in " + in + " --out o.stv --filter staa:model.staa"), 3);
  EXPECT_EQ(run("downsample --in missing.stv --out o.stv"), 3);
}

TEST_F(Cli, QuantizeWritesIntegers) {
  const auto in = video({3, 4, 8, 8}, "in.stv");
  ASSERT_EQ(run("downsample --in " + in + " --out q.stv --filter gaussian --quantize"), 0);
  const auto bytes = [&] {
    std::ifstream f(dir / "q.stv", std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }();
  EXPECT_EQ(bytes.size(), 4u + 7 * 4 + 3 * 2 * 4 * 4);  // u8 payload
  for (float x : read_stv(dir / "q.stv").data.data()) EXPECT_EQ(x, std::round(x));
  ASSERT_EQ(run("downsample --in " + in + " --out frames --filter box:2 --quantize"), 0);
  EXPECT_EQ(load_frames(dir / "frames").frames(), 2u);
}

TEST_F(Cli, LearnedFilterFromCheckpoint) {
  const auto ck = checkpoint(Model::create(tiny({2, 1}, 2), Constraint::Softmax, 0), "m.staa");
  const auto in = video({3, 4, 8, 8}, "in.stv");
  ASSERT_EQ(run("downsample --in " + in + " --out o.stv --filter staa:" + ck), 0);
  EXPECT_EQ(read_stv(dir / "o.stv").data.shape(), (Shape{3, 2, 4, 4}));
}

TEST_F(Cli, UpscaleShapeLaw) {
  const auto ck = checkpoint(Model::create(tiny({2, 1}, 4), Constraint::Softmax, 0), "m.staa");
  const auto in = video({3, 4, 32, 32}, "in.stv", {15, 1});
  std::string out;
  ASSERT_EQ(run("upscale --in " + in + " --ckpt " + ck + " --rt 2 --rs 4 --out up.stv", &out), 0);
  const auto v = read_stv(dir / "up.stv");
  EXPECT_EQ(v.data.shape(), (Shape{3, 8, 128, 128}));
  EXPECT_EQ(v.fps, Rational(30, 1));
  EXPECT_EQ(run("upscale --in " + in + " --ckpt " + ck + " --rt 2 --rs 2 --out up.stv"), 2);
  EXPECT_EQ(run("upscale --in " + in + " --ckpt missing.staa --rt 2 --rs 4 --out up.stv"), 3);
}

TEST_F(Cli, RationalFrameRate) {
  const auto ck = checkpoint(Model::create_fixed(tiny({6, 5}, 1), ClassicalFilter::nearest(), 0), "m.staa");
  const auto five = video({3, 5, 8, 8}, "five.stv", {20, 1});
  ASSERT_EQ(run("convert-fps --in " + five + " --ckpt " + ck + " --rt 6/5 --out six"), 0);
  const auto v = load_frames(dir / "six");
  EXPECT_EQ(v.frames(), 6u);
  std::ifstream fps(dir / "six" / "fps.txt");
  std::string rate;
  fps >> rate;
  EXPECT_EQ(rate, "24");
  const auto ten = video({3, 10, 8, 8}, "ten.stv", {20, 1});
  ASSERT_EQ(run("upscale --in " + ten + " --ckpt " + ck + " --rt 6/5 --rs 1 --fps 40 --out twelve.stv"), 0);
  const auto twelve = read_stv(dir / "twelve.stv");
  EXPECT_EQ(twelve.frames(), 12u);
  EXPECT_EQ(twelve.fps, Rational(48, 1));
  EXPECT_EQ(run("convert-fps --in six --ckpt " + ck + " --rt 6/5 --out again"), 2);  // 6 frames, not a multiple of 5
  const auto seven = video({3, 7, 8, 8}, "seven_in.stv", {20, 1});
  EXPECT_EQ(run("convert-fps --in " + seven + " --ckpt " + ck + " --rt 6/5 --out bad"), 2);
}

TEST_F(Cli, AnalyzeReport) {
  ASSERT_EQ(run("analyze --scene bar:vx=1 --filters nearest,box,gaussian --rt 2 --rs 2 --out report/deep"), 0);
  std::ifstream csv(dir / "report" / "deep" / "aliasing.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "filter,v_x,line_fraction,alias_fraction");
  std::map<std::string, double> alias;
  while (std::getline(csv, line)) {
    std::stringstream row(line);
    std::string name, vx, lf, af;
    std::getline(row, name, ',');
    std::getline(row, vx, ',');
    std::getline(row, lf, ',');
    std::getline(row, af, ',');
    alias[name] = std::stod(af);
  }
  ASSERT_EQ(alias.size(), 3u);
  EXPECT_GT(alias["nearest"], alias["box"]);
  EXPECT_GT(alias["box"], alias["gaussian"]);
  for (const char* f : {"original.pgm", "nearest.pgm", "box.pgm", "gaussian.pgm"})
    EXPECT_TRUE(fs::exists(dir / "report" / "deep" / f)) << f;

  ASSERT_EQ(run("analyze --scene bar:vx=0 --out still"), 0);
  std::ifstream still(dir / "still" / "aliasing.csv");
  std::getline(still, header);
  while (std::getline(still, line)) EXPECT_LT(std::abs(std::stod(line.substr(line.rfind(',') + 1))), 1e-6) << line;

  EXPECT_EQ(run("analyze --scene bar:vx=fast --out x"), 2);
  EXPECT_EQ(run("analyze --scene blob --out x"), 2);
}

TEST_F(Cli, MetricsCsv) {
  const auto a = video({3, 2, 16, 16}, "a.stv");
  std::string out;
  ASSERT_EQ(run("metrics " + a + " " + a, &out), 0);
  EXPECT_EQ(out.substr(0, out.find('\n')), "file_a,file_b,psnr_db,ssim");
  EXPECT_NE(out.find(",inf,1"), std::string::npos) << out;
  ASSERT_EQ(run("metrics --ssim-space luma " + a + " " + video({3, 2, 16, 16}, "b.stv"), &out), 0);
  EXPECT_EQ(run("metrics --ssim-space hsv " + a + " " + a), 2);
  EXPECT_EQ(run("metrics " + a + " " + video({3, 3, 16, 16}, "c.stv")), 2);
}

TEST_F(Cli, TrainAndInspect) {
  const std::string common = " --synthetic 3 --clip-frames 4 --clip-size 16 --steps 2 --patch-s 8 --val-count 1"
                             " --features 4 --rdb-blocks 1 --rdb-layers 1 --growth 4 --log-every 1";
  std::string log;
  ASSERT_EQ(run("train" + common + " --out m.staa --loss-csv loss.csv --seed 3", &log), 0);
  EXPECT_NE(log.find("channel mean drift"), std::string::npos) << log;
  std::ifstream csv(dir / "loss.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,lr,train_l1,val_psnr");
  const auto first = load_checkpoint(dir / "m.staa");
  ASSERT_EQ(run("train" + common + " --out again.staa --seed 3"), 0);
  EXPECT_EQ(load_checkpoint(dir / "again.staa"), first);

  std::string out;
  ASSERT_EQ(run("inspect-checkpoint m.staa", &out), 0);
  EXPECT_NE(out.find("step 2"), std::string::npos);
  EXPECT_NE(out.find("ds.raw (3,3,3)"), std::string::npos) << out;

  ASSERT_EQ(run("train-blur" + common + " --rs 1 --out blur.staa"), 0);
  EXPECT_EQ(from_checkpoint(load_checkpoint(dir / "blur.staa")).fixed.kind, ClassicalKind::BoxTemporal);

  EXPECT_EQ(run("train --steps 2"), 2);  // no data
  std::ofstream(dir / "junk.staa") << "not a checkpoint";
  EXPECT_EQ(run("inspect-checkpoint junk.staa"), 4);
}
