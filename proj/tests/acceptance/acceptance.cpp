// Prints one PASS/FAIL line per acceptance criterion. Exit status is nonzero
// if any criterion fails.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hmdr/cli.hpp"
#include "hmdr/data.hpp"
#include "hmdr/extractors.hpp"
#include "hmdr/image_io.hpp"
#include "hmdr/metrics.hpp"
#include "hmdr/synthetic.hpp"
#include "hmdr/trainer.hpp"
#include "support.hpp"

using namespace hmdr;
namespace fs = std::filesystem;
using testing_support::from_array;
using testing_support::identical;
using testing_support::to_array;
using testing_support::to_vector;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) throw std::runtime_error("hmdr " + args.front() + " exited " + std::to_string(code) + ": " + err.str());
  return code;
}

// Shared on-disk state: synthetic corpus, smoke run, ablation runs.
struct Workspace {
  fs::path root = testing_support::scratch_dir("acceptance");
  bool corpus_ready = false;
  std::optional<double> smoke_seconds;

  fs::path corpus() { return root / "corpus"; }
  fs::path mask() { return root / "mask.png"; }

  void ensure_corpus() {
    if (corpus_ready) return;
    cli({"make-synthetic-corpus", "--out", corpus().string(), "--clips", "8", "--frames", "16", "--height", "64",
         "--width", "64"});
    cli({"make-masks", "--out", mask().string(), "--height", "64", "--width", "64"});
    corpus_ready = true;
  }

  void train(const fs::path& out, std::vector<std::string> extra) {
    ensure_corpus();
    std::vector<std::string> args{"train",          "--manifest",      (corpus() / "manifest.json").string(),
                                  "--out",          out.string(),      "--iterations",
                                  "200",            "--batch-size",    "2",
                                  "--clip-length",  "8",               "--base-channels",
                                  "16"};
    args.insert(args.end(), extra.begin(), extra.end());
    cli(args);
  }

  fs::path smoke() {
    const auto dir = root / "full";
    if (!smoke_seconds) {
      const auto t0 = std::chrono::steady_clock::now();
      train(dir, {});
      smoke_seconds = seconds_since(t0);
    }
    return dir;
  }

  static fs::path final_checkpoint(const fs::path& run) { return run / "checkpoints" / "iter_000200"; }

  void infer(const fs::path& checkpoint, const std::string& clip, const fs::path& out, int reference = 0) {
    const auto frames = corpus() / clip;
    cli({"infer", "--checkpoint", checkpoint.string(), "--frames", frames.string(), "--mask", mask().string(),
         "--landmarks", (frames / "landmarks.txt").string(), "--reference",
         (frames / frame_file_name(reference)).string(), "--out", out.string()});
  }
};

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> len(1, 32);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(len(rng));
    for (auto& v : x) v = n01(rng);
    const ShiftKernel w{n01(rng), n01(rng), n01(rng)};
    const auto got = shift_decompose_1d(x, w);
    const auto want = oracle::conv3_direct(x, w.w1, w.w2, w.w3);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 5.0, "1000 pairs, max abs err " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// Future frames t >= t0 of every given tensor get fresh noise.
std::vector<torch::Tensor> perturb_future(std::vector<torch::Tensor> xs, int64_t t0) {
  for (auto& x : xs) {
    x = x.clone();
    auto tail = x.narrow(1, t0, x.size(1) - t0);
    tail.add_(torch::randn_like(tail));
  }
  return xs;
}

bool past_equal(const torch::Tensor& a, const torch::Tensor& b, int64_t t0) {
  return identical(a.narrow(1, 0, t0).contiguous(), b.narrow(1, 0, t0).contiguous());
}

Outcome criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  torch::NoGradGuard no_grad;
  std::mt19937_64 rng(202);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int broken_shift = 0, broken_conv = 0, broken_gen = 0;
  for (int trial = 0; trial < 100; ++trial) {
    torch::manual_seed(1000 + trial);
    const int64_t n = pick(1, 2), t = pick(2, 6), c = pick(1, 16), h = pick(1, 5), w = pick(1, 5);
    const int64_t cut = pick(1, static_cast<int>(t) - 1);
    ShiftSpec spec{std::uniform_real_distribution<double>(0.05, 1.0)(rng), ShiftDirection::kOnline, trial % 2 == 0};

    auto f = torch::randn({n, t, c, h, w});
    auto f2 = perturb_future({f}, cut)[0];
    if (!past_equal(temporal_shift(f, spec), temporal_shift(f2, spec), cut)) ++broken_shift;

    GatedConvOptions o;
    o.in_channels = c;
    o.out_channels = pick(1, 8);
    o.dilation = pick(1, 2);
    o.shift = spec;
    GatedTsmConv conv(o);
    if (conv->shift_kernels.defined()) conv->shift_kernels.normal_();
    if (!past_equal(conv->forward(f), conv->forward(f2), cut)) ++broken_conv;

    GeneratorConfig gc;
    gc.base_channels = 4;
    gc.max_channels = 16;
    Generator g(gc);
    for (auto& p : g->named_parameters()) {
      if (p.key().find("shift_kernels") != std::string::npos) p.value().normal_();
    }
    g->attention_after_downsample()->gamma.fill_(0.8);
    g->attention_before_dilation()->gamma.fill_(-0.6);
    const int64_t side = 4 * pick(2, 4);
    auto mask = make_hmd_mask(side, side).masks.view({1, 1, 1, side, side}).expand({n, t, 1, side, side});
    auto frames = torch::rand({n, t, 3, side, side});
    GeneratorInput in{frames * (1 - mask), mask.contiguous(), torch::rand({n, t, 1, side, side}),
                      torch::rand({n, 3, side, side}) * mask.select(1, 0)};
    auto changed = perturb_future({in.masked_frames, in.landmark_maps}, cut);
    GeneratorInput in2 = in;
    in2.masked_frames = changed[0];
    in2.landmark_maps = changed[1];
    if (!past_equal(g->forward(in), g->forward(in2), cut)) ++broken_gen;
  }
  const double secs = seconds_since(t0);
  const bool ok = broken_shift + broken_conv + broken_gen == 0 && secs < 60.0;
  return {ok, "100 cases, violations shift/conv/generator " + std::to_string(broken_shift) + "/" +
                  std::to_string(broken_conv) + "/" + std::to_string(broken_gen) + ", " + fmt("%.1f", secs) + " s"};
}

Outcome criterion_3() {
  torch::NoGradGuard no_grad;
  std::mt19937_64 rng(303);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  double worst_out = 0.0, worst_a = 0.0, worst_sum = 0.0;
  bool identity = true;
  for (int trial = 0; trial < 50; ++trial) {
    torch::manual_seed(3000 + trial);
    const int64_t c = pick(1, 8), reduction = pick(1, 4), t = pick(1, 3), h = pick(1, 4), w = pick(1, 4);
    SelfAttention m(c, reduction);
    m->to(torch::kFloat64);
    auto x = torch::randn({1, t, c, h, w}, torch::kFloat64);
    identity = identity && identical(m->forward(x), x);

    m->gamma.fill_(std::normal_distribution<double>()(rng));
    AttentionMaps maps;
    auto y = m->forward(x, maps);
    auto flat = [](const torch::nn::Conv2d& conv) { return to_array(conv->weight.flatten(1)); };
    auto want = oracle::attention(to_array(x.reshape({t, c, h, w})), flat(m->query), to_vector(m->query->bias),
                                  flat(m->key), to_vector(m->key->bias), flat(m->value), to_vector(m->value->bias),
                                  m->gamma.item<double>());
    worst_out = std::max(worst_out, (y.reshape({t, c, h, w}) - from_array(want.out)).abs().max().item<double>());
    worst_a = std::max(worst_a, (maps.a - from_array(want.a)).abs().max().item<double>());
    worst_sum = std::max(worst_sum, (maps.a.sum(2) - 1.0).abs().max().item<double>());
  }
  const bool ok = worst_out <= 1e-5 && worst_a <= 1e-5 && worst_sum <= 1e-5 && identity;
  return {ok, "50 cases, max err out " + fmt("%.2g", worst_out) + ", weights " + fmt("%.2g", worst_a) +
                  ", row sums " + fmt("%.2g", worst_sum) + ", gamma=0 identity " + (identity ? "exact" : "broken")};
}

Outcome criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    std::string name;
    testing_support::GradCheck r;
  };
  std::vector<Case> cases;
  torch::manual_seed(404);
  {
    GatedConvOptions o;
    o.in_channels = 4;
    o.out_channels = 3;
    o.shift = {0.5, ShiftDirection::kOnline, true};
    GatedTsmConv layer(o);
    layer->to(torch::kFloat64);
    auto x = torch::randn({1, 3, 4, 4, 4}, torch::kFloat64);
    auto w = torch::randn({1, 3, 3, 4, 4}, torch::kFloat64);
    cases.push_back({"gated conv", testing_support::grad_check(layer->parameters(),
                                                               [&] { return (layer->forward(x) * w).sum(); })});
  }
  {
    SelfAttention m(4, 2);
    m->to(torch::kFloat64);
    {
      torch::NoGradGuard g;
      m->gamma.fill_(0.5);
    }
    auto x = torch::randn({1, 2, 4, 3, 3}, torch::kFloat64);
    auto w = torch::randn({1, 2, 4, 3, 3}, torch::kFloat64);
    cases.push_back({"attention", testing_support::grad_check(m->parameters(),
                                                              [&] { return (m->forward(x) * w).sum(); })});
  }
  RandomProjectionExtractor fx(7, {4, 4});
  RandomProjectionScorer scorer(9);
  auto gt = torch::rand({1, 2, 3, 8, 8}, torch::kFloat64);
  auto out = (gt + 0.2 * torch::sign(torch::randn_like(gt))).set_requires_grad(true);
  auto scores = torch::randn({2, 4, 4}, torch::kFloat64).set_requires_grad(true);
  auto real = torch::randn({2, 4, 4}, torch::kFloat64).set_requires_grad(true);
  cases.push_back({"recon", testing_support::grad_check({out}, [&] { return recon_loss(out, gt); })});
  cases.push_back({"vgg", testing_support::grad_check({out}, [&] { return vgg_loss(out, gt, fx); })});
  cases.push_back({"style", testing_support::grad_check({out}, [&] { return style_loss(out, gt, fx); })});
  cases.push_back({"adv_d", testing_support::grad_check({real, scores}, [&] { return adv_loss_d(real, scores); })});
  cases.push_back({"adv_g", testing_support::grad_check({scores}, [&] { return adv_loss_g(scores); })});
  cases.push_back({"fer", testing_support::grad_check({out}, [&] { return fer_loss(gt, out, scorer); })});

  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    ok = ok && c.r.rel_error < 1e-3 && c.r.parameters <= 1000;
    detail += c.name + " " + fmt("%.1e", c.r.rel_error) + " (" + std::to_string(c.r.parameters) + "p), ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300.0;
  return {ok, detail + fmt("%.1f", secs) + " s"};
}

Outcome criterion_5() {
  torch::manual_seed(505);
  RandomProjectionExtractor fx(1234, {8, 8});
  RandomProjectionScorer scorer(4321);
  auto a = torch::rand({2, 3, 3, 16, 16});
  const double zeros[] = {recon_loss(a, a).item<double>(), vgg_loss(a, a, fx).item<double>(),
                          style_loss(a, a, fx).item<double>(), fer_loss(a, a, scorer).item<double>()};
  bool zero = true;
  for (double z : zeros) zero = zero && z == 0.0;

  const LossTerms<double> ones{1, 1, 1, 1, 1};
  const LossWeights weights{1, 2, 10, 1, 1};
  const double total = total_loss(ones, weights);
  const auto one = torch::ones({}, torch::kFloat64);
  const double total_t = total_loss(LossTerms<torch::Tensor>{one, one, one, one, one}, weights).item<double>();

  int asym = 0;
  for (int i = 0; i < 100; ++i) {
    auto r = torch::randn({2, 1, 4, 4}, torch::kFloat64), f = torch::randn({2, 1, 4, 4}, torch::kFloat64);
    if (adv_loss_d(r, f).item<double>() != -adv_loss_d(f, r).item<double>()) ++asym;
  }
  const bool ok = zero && total == 15.0 && total_t == 15.0 && asym == 0;
  return {ok, std::string("identical-input zeros ") + (zero ? "exact" : "nonzero") + ", total " +
                  fmt("%.17g", total) + ", antisymmetry violations " + std::to_string(asym) + "/100"};
}

Outcome criterion_6() {
  torch::manual_seed(606);
  auto a = torch::rand({3, 3, 24, 24}, torch::kFloat64);
  const double s = ssim(a, a);
  auto img = torch::randint(16, 240, {3, 32, 32}).to(torch::kFloat64);
  const double p = psnr(img, img + 16.0, 255.0);
  RandomProjectionExtractor fx(1234, {8, 8});
  auto set = torch::rand({16, 3, 16, 16}, torch::kFloat64);
  const double self = fid(set, set, fx);
  const double r3 = std::sqrt(3.0) / 2.0;
  auto samples = [&](double m) { return torch::tensor({m - r3, m - r3, m + r3, m + r3}, torch::kFloat64).view({4, 1}); };
  double gauss = 0.0;
  for (double m : {0.5, 1.0, 2.0}) gauss = std::max(gauss, std::abs(fid_from_features(samples(0), samples(m)) - m * m));

  const bool psnr_ok = std::abs(p - 24.0549) <= 1e-3;
  const bool ok = std::abs(s - 1.0) <= 1e-12 && psnr_ok && self <= 1e-3 && gauss <= 1e-4;
  return {ok, "ssim(a,a) " + fmt("%.15g", s) + ", psnr " + fmt("%.4f", p) + " dB vs 24.0549 " +
                  (psnr_ok ? "ok" : "off") + ", fid(S,S) " + fmt("%.2e", self) + ", gaussian max err " +
                  fmt("%.1e", gauss)};
}

Outcome criterion_7(Workspace& ws) {
  const auto run = ws.smoke();
  const auto clip = std::string("clip_006");
  const auto out = ws.root / "c7_infer";
  ws.infer(Workspace::final_checkpoint(run), clip, out);
  const auto input = read_clip(ws.corpus() / clip).frames;
  const auto result = read_clip(out).frames;
  const auto outside = (read_mask_image(ws.mask()) < 0.5).expand_as(input);
  const bool composite = identical(result.masked_select(outside), input.masked_select(outside)) &&
                         !identical(result, input);

  const auto m = make_hmd_mask(64, 64, {}, input.size(0));
  const auto ref = prepare_reference(VideoClip{input, std::nullopt}, m, 3);
  const bool ref_zero = ref.masked_select(m.masks[3].expand_as(ref) < 0.5).eq(0).all().item<bool>();

  // Layout on a constructed fixture: every slot carries a distinct pattern.
  LoadedClip fixture{"fixture", {torch::rand({3, 3, 8, 8}), std::nullopt}, torch::rand({3, 1, 8, 8})};
  const auto fm = make_hmd_mask(8, 8, {0.25, 0.75, 0.25, 0.75, 0.0}, 3);
  ClipWindow w{&fixture, 0, 3, 2};
  const auto s = assemble_batch(std::span(&w, 1), fm, true).input.stacked();
  bool layout = s.size(2) == 8;
  for (int64_t t = 0; t < 3 && layout; ++t) {
    const auto slot = s[0][t];
    layout = identical(slot.narrow(0, 0, 3), fixture.clip.frames[t] * (1 - fm.masks[t])) &&
             identical(slot.narrow(0, 3, 1), fm.masks[t]) &&
             identical(slot.narrow(0, 4, 1), fixture.landmark_maps[t]) &&
             identical(slot.narrow(0, 5, 3), fixture.clip.frames[2] * fm.masks[2]);
  }
  return {composite && ref_zero && layout, std::string("outside-mask bit-exact ") + (composite ? "yes" : "no") +
                                               ", reference zero outside mask " + (ref_zero ? "yes" : "no") +
                                               ", input layout " + (layout ? "ok" : "wrong")};
}

std::vector<std::array<double, 6>> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::array<double, 6>> rows;
  std::array<double, 6> r;
  while (in >> r[0] >> r[1] >> r[2] >> r[3] >> r[4] >> r[5]) rows.push_back(r);
  return rows;
}

Outcome criterion_8(Workspace& ws) {
  const auto run = ws.smoke();
  const auto rows = read_loss_log(run / "loss_log.txt");
  if (rows.size() != 200) return {false, "loss log has " + std::to_string(rows.size()) + " rows"};
  bool finite = true;
  for (const auto& r : rows)
    for (double v : r) finite = finite && std::isfinite(v);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += rows[i][4] / 10.0;
    last += rows[190 + i][4] / 10.0;
  }
  const double drop = 1.0 - last / first;
  const bool ok = finite && drop >= 0.2 && *ws.smoke_seconds <= 900.0;
  return {ok, "recon avg steps 1-10 " + fmt("%.5f", first) + ", steps 191-200 " + fmt("%.5f", last) + ", drop " +
                  fmt("%.1f", 100.0 * drop) + "% (need 20%), finite " + (finite ? "yes" : "no") + ", " +
                  fmt("%.0f", *ws.smoke_seconds) + " s"};
}

Outcome criterion_9(Workspace& ws) {
  const auto full = ws.smoke();
  const auto no_lm = ws.root / "no_landmarks", no_fer = ws.root / "no_fer";
  ws.train(no_lm, {"--no-landmarks"});
  ws.train(no_fer, {"--lambda-fer", "0"});
  const std::vector<std::pair<std::string, fs::path>> models{
      {"full", full}, {"no-landmarks", no_lm}, {"no-fer", no_fer}};

  const auto gt = ws.root / "eval_gt";
  std::vector<std::string> args{"evaluate", "--gt", gt.string(), "--out", (ws.root / "eval").string()};
  for (const auto& entry : ClipManifest::load(ws.corpus() / "manifest.json").clips_in(Split::kTest)) {
    write_clip(gt / entry.name, read_clip(ws.corpus() / entry.frames_dir));
    for (const auto& [label, run] : models) {
      ws.infer(Workspace::final_checkpoint(run), entry.name, ws.root / "pred" / label / entry.name);
    }
  }
  for (const auto& [label, run] : models) args.push_back("--pred=" + label + "=" + (ws.root / "pred" / label).string());
  cli(args);

  const auto j = nlohmann::json::parse(testing_support::read_text(ws.root / "eval" / "report.json"));
  const auto text = testing_support::read_text(ws.root / "eval" / "report.txt");
  std::cout << text;
  bool ok = j["models"].size() == 3;
  for (std::size_t i = 0; ok && i < 3; ++i) {
    ok = j["models"][i]["label"] == models[i].first && text.find(models[i].first) != std::string::npos &&
         read_checkpoint_config(Workspace::final_checkpoint(models[i].second)).train.iterations == 200;
  }
  const auto fer_weight = read_checkpoint_manifest(Workspace::final_checkpoint(no_fer)).weights.fer;
  const bool lm_off = !read_checkpoint_config(Workspace::final_checkpoint(no_lm)).train.use_landmarks;
  ok = ok && fer_weight == 0.0 && lm_off;
  return {ok, "report rows " + std::to_string(j["models"].size()) + " (full, no-landmarks, no-fer) over " +
                  std::to_string(j["models"][0]["clips"].size()) + " test clips"};
}

Outcome criterion_10(Workspace& ws) {
  ws.ensure_corpus();
  RunConfig rc;
  auto& c = rc.train;
  c.generator.base_channels = 8;
  c.discriminator.base_channels = 8;
  c.batch_size = 2;
  c.clip_length = 4;
  c.seed = 10;
  BatchOptions bo;
  bo.batch_size = c.batch_size;
  bo.clip_length = c.clip_length;
  bo.seed = c.seed;
  auto extractor = make_feature_extractor(c.extractor);
  auto scorer = make_expression_scorer(c.scorer);
  const TrainContext ctx{c, *extractor, *scorer};
  const auto manifest = ClipManifest::load(ws.corpus() / "manifest.json");

  auto state = make_train_state(c);
  auto sampler = BatchSampler::from_manifest(manifest, Split::kTrain, bo);
  for (int i = 0; i < 3; ++i) train_step(state, sampler.next(), ctx);
  const auto dir = ws.root / "resume" / "iter_000003";
  save_checkpoint(dir, state, rc, sampler.state());

  auto loaded = load_checkpoint(dir, c);
  auto resumed = BatchSampler::from_manifest(manifest, Split::kTrain, bo);
  resumed.restore_state(loaded.sampler_state);

  auto snapshot = [](TrainState& s) {
    std::vector<torch::Tensor> p;
    for (auto& t : s.generator->parameters()) p.push_back(t.detach().clone());
    for (auto& t : s.discriminator->parameters()) p.push_back(t.detach().clone());
    return p;
  };
  const int steps = 5;
  std::vector<std::vector<torch::Tensor>> straight, again;
  std::vector<std::array<double, 6>> losses_a, losses_b;
  torch::manual_seed(77);
  for (int i = 0; i < steps; ++i) {
    losses_a.push_back(train_step(state, sampler.next(), ctx).values());
    straight.push_back(snapshot(state));
  }
  torch::manual_seed(77);
  for (int i = 0; i < steps; ++i) {
    losses_b.push_back(train_step(loaded.state, resumed.next(), ctx).values());
    again.push_back(snapshot(loaded.state));
  }
  int mismatched = 0;
  double worst = 0.0;
  for (int i = 0; i < steps; ++i) {
    for (std::size_t k = 0; k < straight[i].size(); ++k) {
      if (!identical(straight[i][k], again[i][k])) {
        ++mismatched;
        worst = std::max(worst, (straight[i][k] - again[i][k]).abs().max().item<double>());
      }
    }
  }
  const bool ok = mismatched == 0 && losses_a == losses_b;
  return {ok, std::to_string(steps) + " steps after resume at iteration 3, " + std::to_string(mismatched) +
                  " differing parameter tensors (max abs diff " + fmt("%.3g", worst) + "), loss records " +
                  (losses_a == losses_b ? "identical" : "differ")};
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  Workspace ws;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"shift decomposition equals 3-tap convolution", criterion_1},
      {"online causality through shift, gated conv and generator", criterion_2},
      {"self-attention matches loop oracle", criterion_3},
      {"finite-difference gradient checks", criterion_4},
      {"loss contracts", criterion_5},
      {"metric oracles", criterion_6},
      {"compositing and conditioning invariants", [&] { return criterion_7(ws); }},
      {"smoke training reduces reconstruction loss", [&] { return criterion_8(ws); }},
      {"ablation report with three labeled rows", [&] { return criterion_9(ws); }},
      {"resume equivalence", [&] { return criterion_10(ws); }},
  };
  std::vector<std::string> lines;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    lines.push_back("criterion " + std::to_string(i + 1) + " " + (o.pass ? "PASS" : "FAIL") + "  " +
                    criteria[i].first + ": " + o.detail);
    std::cout << lines.back() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria pass\n";
  return failed == 0 ? 0 : 1;
}
