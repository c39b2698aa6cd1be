#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hmdr/cli.hpp"
#include "hmdr/data.hpp"
#include "hmdr/image_io.hpp"
#include "hmdr/landmarks.hpp"
#include "hmdr/synthetic.hpp"
#include "support.hpp"

using namespace hmdr;
namespace fs = std::filesystem;
using testing_support::identical;
using testing_support::read_text;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Small corpus plus a tiny model config, shared by the slower tests.
class CliPipeline : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = testing_support::scratch_dir("cli_pipeline");
    ASSERT_EQ(cli({"make-synthetic-corpus", "--out", (root / "corpus").string(), "--clips", "3", "--frames", "6",
                   "--test-clips", "1"})
                  .code,
              0);
    std::ofstream(root / "tiny.json") << R"({"generator": {"base_channels": 4, "max_channels": 16},
      "discriminator": {"base_channels": 4, "max_channels": 16},
      "train": {"batch_size": 2, "clip_length": 4, "seed": 1}})";
    ASSERT_EQ(cli({"make-masks", "--out", (root / "mask.png").string(), "--height", "64", "--width", "64"}).code, 0);
    write_image(root / "zero_mask.png", torch::zeros({1, 64, 64}));
    auto r = cli({"train", "--config", (root / "tiny.json").string(), "--manifest",
                  (root / "corpus" / "manifest.json").string(), "--out", (root / "run").string(), "--iterations",
                  "5"});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static fs::path checkpoint() { return root / "run" / "checkpoints" / "iter_000005"; }
  static fs::path clip_dir() { return root / "corpus" / "clip_002"; }

  Result infer(const fs::path& mask, const fs::path& reference, const fs::path& out) {
    return cli({"infer", "--checkpoint", checkpoint().string(), "--frames", clip_dir().string(), "--mask",
                mask.string(), "--landmarks", (clip_dir() / "landmarks.txt").string(), "--reference",
                reference.string(), "--out", out.string()});
  }
};

fs::path CliPipeline::root;

}  // namespace

TEST(Cli, HelpListsFlagsAndUnknownFlagsFail) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"make-synthetic-corpus", {"--out", "--clips", "--frames", "--height", "--width", "--seed", "--test-clips"}},
      {"make-masks", {"--out", "--height", "--width", "--config", "--mask-top", "--mask-radius"}},
      {"landmarks", {"--frames", "--out", "--provider", "--faces", "--maps-out"}},
      {"train", {"--config", "--manifest", "--out", "--resume", "--lr", "--iterations", "--batch-size",
                 "--clip-length", "--seed", "--checkpoint-every", "--grad-clip", "--d-steps", "--no-landmarks",
                 "--lambda-adv", "--lambda-fer", "--lambda-style", "--lambda-vgg", "--lambda-recon"}},
      {"infer", {"--checkpoint", "--frames", "--mask", "--landmarks", "--reference", "--out"}},
      {"evaluate", {"--gt", "--pred", "--mask", "--config", "--region", "--extractor", "--out", "--plots"}},
  };
  for (const auto& [cmd, expected] : flags) {
    auto r = cli({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    for (const auto& f : expected) EXPECT_NE(r.out.find(f), std::string::npos) << cmd << " " << f;
    EXPECT_EQ(cli({cmd, "--definitely-not-a-flag"}).code, kExitConfig) << cmd;
  }
  EXPECT_EQ(cli({}).code, kExitConfig);
}

TEST(Cli, SyntheticCorpusDeterministicAndCounted) {
  auto root = testing_support::scratch_dir("cli_corpus");
  ASSERT_EQ(cli({"make-synthetic-corpus", "--out", (root / "a").string(), "--seed", "7"}).code, 0);
  ASSERT_EQ(cli({"make-synthetic-corpus", "--out", (root / "b").string(), "--seed", "7"}).code, 0);
  const auto fa = files_under(root / "a"), fb = files_under(root / "b");
  ASSERT_EQ(fa, fb);
  for (const auto& f : fa) EXPECT_EQ(read_text(root / "a" / f), read_text(root / "b" / f)) << f;
  int frames = 0;
  for (const auto& f : fa) frames += f.filename().string().rfind("frame_", 0) == 0;
  EXPECT_EQ(frames, 128);
  // Landmark files agree with the parametric faces, and the CLI detector recovers them.
  ASSERT_EQ(cli({"landmarks", "--frames", (root / "a" / "clip_000").string(), "--out",
                 (root / "lm.txt").string()})
                .code,
            0);
  auto detected = read_landmark_file(root / "lm.txt");
  auto stored = read_landmark_file(root / "a" / "clip_000" / "landmarks.txt");
  auto faces = synthesize_track(CorpusOptions{}, 0);
  ASSERT_EQ(detected.size(), faces.size());
  for (std::size_t i = 0; i < faces.size(); ++i) {
    EXPECT_EQ(*stored[i], face_landmarks(faces[i]));
    EXPECT_EQ(*detected[i], *stored[i]);
  }
}

TEST(Cli, MakeMasksUsesGeometry) {
  auto root = testing_support::scratch_dir("cli_masks");
  ASSERT_EQ(cli({"make-masks", "--out", (root / "m.png").string(), "--height", "128", "--width", "128"}).code, 0);
  auto m = read_mask_image(root / "m.png");
  EXPECT_TRUE(identical(m, make_hmd_mask(128, 128).masks[0]));
  EXPECT_EQ(cli({"make-masks", "--out", (root / "bad.png").string(), "--mask-top", "0.9"}).code, kExitConfig);
}

TEST_F(CliPipeline, TrainWritesSixColumnLogAndResumes) {
  const auto log = read_text(root / "run" / "loss_log.txt");
  std::istringstream lines(log);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    std::istringstream cols(line);
    std::vector<double> v;
    double x;
    while (cols >> x) v.push_back(x);
    EXPECT_EQ(v.size(), 6u) << line;
    ++count;
  }
  EXPECT_EQ(count, 5);
  EXPECT_TRUE(fs::exists(root / "run" / "resolved_config.json"));
  EXPECT_TRUE(fs::exists(root / "run" / "metrics.jsonl"));

  auto resumed = root / "resumed";
  fs::copy(root / "run", resumed, fs::copy_options::recursive);
  auto r = cli({"train", "--resume", (resumed / "checkpoints" / "iter_000005").string(), "--out", resumed.string(),
                "--iterations", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("at iteration 5"), std::string::npos);
  EXPECT_TRUE(fs::exists(resumed / "checkpoints" / "iter_000007"));
  EXPECT_EQ(read_text(resumed / "checkpoints" / "latest.txt"), "iter_000007\n");
  auto resumed_log = read_text(resumed / "loss_log.txt");
  EXPECT_EQ(std::count(resumed_log.begin(), resumed_log.end(), '\n'), 7);
}

TEST_F(CliPipeline, TrainRejectsBadConfigBeforeCompute) {
  auto out = root / "bad_run";
  auto r = cli({"train", "--config", (root / "tiny.json").string(), "--manifest",
                (root / "corpus" / "manifest.json").string(), "--out", out.string(), "--lr", "-1"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_FALSE(fs::exists(out / "loss_log.txt"));
  r = cli({"train", "--config", (root / "tiny.json").string(), "--manifest", (root / "nope.json").string(),
           "--out", out.string(), "--iterations", "1"});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_TRUE(fs::exists(out / "resolved_config.json"));
}

TEST_F(CliPipeline, InferCompositingAndDeterminism) {
  const auto input = read_clip(clip_dir()).frames;
  const auto ref = clip_dir() / frame_file_name(0);
  ASSERT_EQ(infer(root / "zero_mask.png", ref, root / "inf_zero").code, 0);
  EXPECT_TRUE(identical(read_clip(root / "inf_zero").frames, input));

  ASSERT_EQ(infer(root / "mask.png", ref, root / "inf_a").code, 0);
  ASSERT_EQ(infer(root / "mask.png", ref, root / "inf_b").code, 0);
  const auto a = read_clip(root / "inf_a").frames;
  EXPECT_TRUE(identical(a, read_clip(root / "inf_b").frames));
  EXPECT_EQ(list_frame_files(root / "inf_a"), list_frame_files(clip_dir()));

  const auto outside = (read_mask_image(root / "mask.png") < 0.5).expand_as(input);
  EXPECT_TRUE(identical(a.masked_select(outside), input.masked_select(outside)));

  // A different reference (a later frame, different blink phase) only moves in-mask pixels.
  ASSERT_EQ(infer(root / "mask.png", clip_dir() / frame_file_name(3), root / "inf_c").code, 0);
  const auto c = read_clip(root / "inf_c").frames;
  EXPECT_TRUE(identical(c.masked_select(outside), a.masked_select(outside)));
}

TEST_F(CliPipeline, InferNamesEachMissingInput) {
  const std::vector<std::pair<std::string, std::string>> inputs{
      {"--checkpoint", checkpoint().string()},
      {"--frames", clip_dir().string()},
      {"--mask", (root / "mask.png").string()},
      {"--landmarks", (clip_dir() / "landmarks.txt").string()},
      {"--reference", (clip_dir() / frame_file_name(0)).string()},
      {"--out", (root / "inf_missing").string()}};
  for (std::size_t skip = 0; skip < inputs.size(); ++skip) {
    std::vector<std::string> args{"infer"};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (i == skip) continue;
      args.push_back(inputs[i].first);
      args.push_back(inputs[i].second);
    }
    auto r = cli(args);
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("missing input: " + inputs[skip].first), std::string::npos) << r.err;
  }
}

TEST_F(CliPipeline, EvaluateIdentityGoldenAndMissingFrame) {
  auto gt = root / "corpus";
  auto eval = root / "eval_same";
  // All three clips, so the pooled FID has more samples than feature dimensions.
  auto r = cli({"evaluate", "--gt", gt.string(), "--pred", "same=" + gt.string(), "--out", eval.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(read_text(eval / "report.json"));
  EXPECT_EQ(j["models"][0]["aggregate"]["mse"].get<double>(), 0.0);
  EXPECT_NEAR(j["models"][0]["aggregate"]["ssim"].get<double>(), 1.0, 1e-12);
  EXPECT_LE(j["models"][0]["aggregate"]["fid"].get<double>(), 1e-3);
  EXPECT_TRUE(fs::exists(eval / "resolved_config.json"));

  // Fixture: ground truth is the test clip, prediction is its masked input.
  auto fixture = root / "fixture";
  const auto clip = read_clip(gt / "clip_002");
  write_clip(fixture / "gt" / "clip_002", clip);
  write_clip(fixture / "masked" / "clip_002", apply_mask(clip, make_hmd_mask(64, 64, {}, clip.length())));
  r = cli({"evaluate", "--gt", (fixture / "gt").string(), "--pred", "masked=" + (fixture / "masked").string(),
           "--pred", "same=" + (fixture / "gt").string(), "--out", (fixture / "out").string(), "--plots"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_text(fixture / "out" / "report.txt");
  EXPECT_EQ(report, testing_support::golden("evaluate_fixture.txt", report));
  EXPECT_TRUE(fs::exists(fixture / "out" / "plots" / "psnr.png"));

  fs::remove(fixture / "masked" / "clip_002" / frame_file_name(4));
  r = cli({"evaluate", "--gt", (fixture / "gt").string(), "--pred", "masked=" + (fixture / "masked").string(),
           "--out", (fixture / "out_missing").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find(frame_file_name(4)), std::string::npos) << r.err;
}
