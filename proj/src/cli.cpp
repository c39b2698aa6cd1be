#include "hmdr/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

#include "hmdr/config.hpp"
#include "hmdr/errors.hpp"
#include "hmdr/image_io.hpp"
#include "hmdr/inference.hpp"
#include "hmdr/landmarks.hpp"
#include "hmdr/metrics.hpp"
#include "hmdr/synthetic.hpp"
#include "hmdr/trainer.hpp"

namespace hmdr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Options shared by commands that read a mask geometry.
struct GeometryFlags {
  CLI::Option* top = nullptr;
  CLI::Option* bottom = nullptr;
  CLI::Option* left = nullptr;
  CLI::Option* right = nullptr;
  CLI::Option* radius = nullptr;
  MaskGeometry values;

  void add(CLI::App* app) {
    top = app->add_option("--mask-top", values.top, "Mask top edge, fraction of height");
    bottom = app->add_option("--mask-bottom", values.bottom, "Mask bottom edge, fraction of height");
    left = app->add_option("--mask-left", values.left, "Mask left edge, fraction of width");
    right = app->add_option("--mask-right", values.right, "Mask right edge, fraction of width");
    radius = app->add_option("--mask-radius", values.corner_radius,
                             "Corner radius, fraction of the shorter half-extent");
  }

  void apply(MaskGeometry& g) const {
    if (top->count()) g.top = values.top;
    if (bottom->count()) g.bottom = values.bottom;
    if (left->count()) g.left = values.left;
    if (right->count()) g.right = values.right;
    if (radius->count()) g.corner_radius = values.corner_radius;
  }
};

json geometry_json(const MaskGeometry& g) {
  return {{"top", g.top}, {"bottom", g.bottom}, {"left", g.left}, {"right", g.right},
          {"corner_radius", g.corner_radius}};
}

struct CorpusCommand {
  CorpusOptions options;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("make-synthetic-corpus", "Render a parametric face-video corpus with landmarks");
    c->add_option("--out", out, "Output directory")->required();
    c->add_option("--clips", options.clips, "Number of clips")->capture_default_str();
    c->add_option("--frames", options.frames, "Frames per clip")->capture_default_str();
    c->add_option("--height", options.height, "Frame height")->capture_default_str();
    c->add_option("--width", options.width, "Frame width")->capture_default_str();
    c->add_option("--seed", options.seed, "Random seed")->capture_default_str();
    c->add_option("--test-clips", options.test_clips, "Trailing clips assigned to the test split")
        ->capture_default_str();
  }

  int run(std::ostream& os) {
    const fs::path root(out);
    write_json(root / "resolved_config.json",
               {{"command", "make-synthetic-corpus"}, {"clips", options.clips}, {"frames", options.frames},
                {"height", options.height}, {"width", options.width}, {"seed", options.seed},
                {"test_clips", options.test_clips}});
    const auto manifest = write_synthetic_corpus(root, options);
    os << "wrote " << manifest.clips.size() << " clips x " << options.frames << " frames to " << root.string()
       << '\n';
    return kExitOk;
  }
};

struct MasksCommand {
  std::string out, config;
  int64_t height = 128, width = 128;
  GeometryFlags geometry;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("make-masks", "Write a static HMD mask image");
    c->add_option("--out", out, "Output PNG path")->required();
    c->add_option("--height", height, "Mask height")->capture_default_str();
    c->add_option("--width", width, "Mask width")->capture_default_str();
    c->add_option("--config", config, "Run config providing the mask geometry");
    geometry.add(c);
  }

  int run(std::ostream& os) {
    MaskGeometry g;
    if (!config.empty()) g = load_run_config(config).train.mask;
    geometry.apply(g);
    g.validate();
    const fs::path path(out);
    const auto dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    write_json(dir / "resolved_config.json",
               {{"command", "make-masks"}, {"height", height}, {"width", width}, {"mask", geometry_json(g)}});
    const auto mask = make_hmd_mask(height, width, g);
    write_image(path, mask.masks[0]);
    os << "mask " << g.describe() << ", area fraction " << mask.masks.mean().item<double>() << " -> " << out
       << '\n';
    return kExitOk;
  }
};

struct LandmarksCommand {
  std::string frames, out, provider = "synthetic", faces, maps_out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("landmarks", "Detect 68-point landmarks for a frame directory");
    c->add_option("--frames", frames, "Directory of frame_*.png files")->required();
    c->add_option("--out", out, "Landmark file to write")->required();
    c->add_option("--provider", provider, "Landmark provider (synthetic)")->capture_default_str();
    c->add_option("--faces", faces, "Face parameter track for the synthetic provider (default <frames>/faces.json)");
    c->add_option("--maps-out", maps_out, "Also write contour maps as PNG files here");
  }

  int run(std::ostream& os, std::ostream& es) {
    if (provider != "synthetic") throw ConfigError("unknown landmark provider '" + provider + "'");
    const fs::path dir(frames);
    const fs::path track_path = faces.empty() ? dir / "faces.json" : fs::path(faces);
    const fs::path out_path(out);
    write_json((out_path.has_parent_path() ? out_path.parent_path() : fs::path(".")) / "resolved_config.json",
               {{"command", "landmarks"}, {"provider", provider}, {"faces", track_path.string()}});
    SyntheticLandmarkProvider p(read_face_track(track_path));
    LandmarkTrack track;
    int64_t h = 0, w = 0;
    for (const auto& name : list_frame_files(dir)) {
      const auto frame = read_image(dir / name);
      h = frame.size(1);
      w = frame.size(2);
      track.push_back(detect_landmarks(frame, p));
    }
    if (track.empty()) throw DataError("no frame_*.png files in " + dir.string());
    int64_t missing = 0;
    for (const auto& t : track) missing += t ? 0 : 1;
    fill_missing_landmarks(track, [&](std::size_t i) {
      es << "warning: no landmarks for frame " << i << " and no earlier detection to reuse\n";
    });
    write_landmark_file(out_path, track);
    if (!maps_out.empty()) {
      const auto maps = landmark_maps(track, static_cast<int>(h), static_cast<int>(w));
      for (int64_t t = 0; t < maps.size(0); ++t) {
        write_image(fs::path(maps_out) / frame_file_name(static_cast<std::size_t>(t)), maps[t]);
      }
    }
    os << "landmarks for " << track.size() << " frames (" << missing << " without detection) -> " << out << '\n';
    return kExitOk;
  }
};

struct TrainCommand {
  std::string config, manifest, out, resume;
  TrainConfig flags;
  CLI::Option *o_lr{}, *o_iters{}, *o_batch{}, *o_clip{}, *o_seed{}, *o_every{}, *o_clip_grad{}, *o_dsteps{},
      *o_base{}, *o_ref{}, *o_no_lm{}, *o_adv{}, *o_fer{}, *o_style{}, *o_vgg{}, *o_recon{}, *o_extractor{},
      *o_scorer{};
  bool no_landmarks = false;
  GeometryFlags geometry;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train generator and discriminator");
    c->add_option("--config", config, "Run config (JSON); flags override its values");
    c->add_option("--manifest", manifest, "Dataset manifest.json");
    c->add_option("--out", out, "Output directory for logs and checkpoints");
    c->add_option("--resume", resume, "Checkpoint directory to continue from");
    o_lr = c->add_option("--lr", flags.learning_rate, "Adam learning rate");
    o_iters = c->add_option("--iterations", flags.iterations, "Total iteration budget");
    o_batch = c->add_option("--batch-size", flags.batch_size, "Clips per batch");
    o_clip = c->add_option("--clip-length", flags.clip_length, "Frames per training window");
    o_seed = c->add_option("--seed", flags.seed, "Seed for initialisation and sampling");
    o_every = c->add_option("--checkpoint-every", flags.checkpoint_every, "Checkpoint cadence (0: final only)");
    o_clip_grad = c->add_option("--grad-clip", flags.grad_clip, "Gradient norm clip (0: off)");
    o_dsteps = c->add_option("--d-steps", flags.d_steps, "Critic updates per generator update");
    o_base = c->add_option("--base-channels", flags.generator.base_channels, "Generator base width");
    o_ref = c->add_option("--reference-index", flags.reference_index, "Reference frame offset (<0: random)");
    o_no_lm = c->add_flag("--no-landmarks", no_landmarks, "Zero the landmark input channel");
    o_adv = c->add_option("--lambda-adv", flags.weights.adv, "Adversarial loss weight");
    o_fer = c->add_option("--lambda-fer", flags.weights.fer, "Expression loss weight");
    o_style = c->add_option("--lambda-style", flags.weights.style, "Style loss weight");
    o_vgg = c->add_option("--lambda-vgg", flags.weights.vgg, "Perceptual loss weight");
    o_recon = c->add_option("--lambda-recon", flags.weights.recon, "Reconstruction loss weight");
    o_extractor = c->add_option("--extractor", flags.extractor.kind, "Feature extractor kind");
    o_scorer = c->add_option("--scorer", flags.scorer.kind, "Expression scorer kind");
    geometry.add(c);
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (!config.empty()) {
      rc = load_run_config(config);
    } else if (!resume.empty()) {
      rc = read_checkpoint_config(resume);
    }
    auto& t = rc.train;
    if (!manifest.empty()) rc.manifest = manifest;
    if (!out.empty()) rc.output_dir = out;
    if (o_lr->count()) t.learning_rate = flags.learning_rate;
    if (o_iters->count()) t.iterations = flags.iterations;
    if (o_batch->count()) t.batch_size = flags.batch_size;
    if (o_clip->count()) t.clip_length = flags.clip_length;
    if (o_seed->count()) t.seed = flags.seed;
    if (o_every->count()) t.checkpoint_every = flags.checkpoint_every;
    if (o_clip_grad->count()) t.grad_clip = flags.grad_clip;
    if (o_dsteps->count()) t.d_steps = flags.d_steps;
    if (o_base->count()) t.generator.base_channels = flags.generator.base_channels;
    if (o_ref->count()) t.reference_index = flags.reference_index;
    if (o_no_lm->count()) t.use_landmarks = false;
    if (o_adv->count()) t.weights.adv = flags.weights.adv;
    if (o_fer->count()) t.weights.fer = flags.weights.fer;
    if (o_style->count()) t.weights.style = flags.weights.style;
    if (o_vgg->count()) t.weights.vgg = flags.weights.vgg;
    if (o_recon->count()) t.weights.recon = flags.weights.recon;
    if (o_extractor->count()) t.extractor.kind = flags.extractor.kind;
    if (o_scorer->count()) t.scorer.kind = flags.scorer.kind;
    geometry.apply(t.mask);
    return rc;
  }

  int run(std::ostream& os) {
    const auto rc = resolve();
    rc.validate();
    if (rc.manifest.empty()) throw ConfigError("train needs a dataset manifest (--manifest or config 'manifest')");
    const fs::path out_dir = rc.output_dir;
    save_run_config(out_dir / "resolved_config.json", rc);

    auto extractor = make_feature_extractor(rc.train.extractor);
    auto scorer = make_expression_scorer(rc.train.scorer);
    BatchOptions bo;
    bo.batch_size = rc.train.batch_size;
    bo.clip_length = rc.train.clip_length;
    bo.reference_index = rc.train.reference_index;
    bo.use_landmarks = rc.train.use_landmarks;
    bo.seed = rc.train.seed;
    bo.mask = rc.train.mask;
    auto sampler = BatchSampler::from_manifest(ClipManifest::load(rc.manifest), Split::kTrain, bo);

    TrainState state;
    if (!resume.empty()) {
      auto loaded = load_checkpoint(resume, rc.train);
      sampler.restore_state(loaded.sampler_state);
      state = std::move(loaded.state);
      os << "resumed from " << resume << " at iteration " << state.iteration << '\n';
    } else {
      state = make_train_state(rc.train);
    }
    if (state.iteration >= rc.train.iterations) {
      throw ConfigError("checkpoint is already at iteration " + std::to_string(state.iteration) +
                        "; raise --iterations to continue");
    }
    TrainLoopOptions lo;
    lo.output_dir = out_dir;
    lo.on_step = [&](const LossRecord& r, const TrainState& s) {
      if (r.iteration == 1 || r.iteration % 10 == 0 || r.iteration == rc.train.iterations) {
        const auto v = r.values();
        os << "iter " << r.iteration << "  adv " << v[0] << "  fer " << v[1] << "  style " << v[2] << "  vgg "
           << v[3] << "  recon " << v[4] << "  total " << v[5] << "  d " << r.d_loss << "  recon(avg10) "
           << s.running_recon() << '\n';
      }
    };
    const auto final_dir = run_training(state, sampler, rc, *extractor, *scorer, lo);
    os << "final checkpoint " << final_dir.string() << '\n';
    return kExitOk;
  }
};

struct InferCommand {
  std::string checkpoint, frames, mask, landmarks, reference, out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "Inpaint the masked region of a frame directory");
    c->add_option("--checkpoint", checkpoint, "Checkpoint directory");
    c->add_option("--frames", frames, "Input frame directory");
    c->add_option("--mask", mask, "HMD mask PNG (white = occluded)");
    c->add_option("--landmarks", landmarks, "Landmark file for the input frames");
    c->add_option("--reference", reference, "Unoccluded reference image of the subject");
    c->add_option("--out", out, "Output frame directory");
  }

  int run(std::ostream& os) {
    const std::pair<const std::string*, const char*> required[] = {
        {&checkpoint, "--checkpoint (trained checkpoint directory)"},
        {&frames, "--frames (input frame directory)"},
        {&mask, "--mask (HMD mask image)"},
        {&landmarks, "--landmarks (landmark file)"},
        {&reference, "--reference (reference image)"},
        {&out, "--out (output directory)"}};
    for (const auto& [value, name] : required) {
      if (value->empty()) throw ConfigError(std::string("missing input: ") + name);
    }
    if (!fs::is_directory(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
    if (!fs::is_directory(frames)) throw DataError("input frames not found: " + frames);
    if (!fs::is_regular_file(mask)) throw DataError("mask image not found: " + mask);
    if (!fs::is_regular_file(landmarks)) throw DataError("landmark file not found: " + landmarks);
    if (!fs::is_regular_file(reference)) throw DataError("reference image not found: " + reference);

    const auto rc = read_checkpoint_config(checkpoint);
    write_json(fs::path(out) / "resolved_config.json",
               {{"command", "infer"}, {"checkpoint", checkpoint}, {"frames", frames}, {"mask", mask},
                {"landmarks", landmarks}, {"reference", reference}, {"generator_config", to_json(rc)}});

    const auto names = list_frame_files(frames);
    const auto clip = read_clip(frames);
    const auto m = read_mask_image(mask);
    if (m.size(1) != clip.height() || m.size(2) != clip.width()) throw DataError("mask size does not match the frames");
    const auto ref = read_image(reference);
    if (ref.size(0) != 3 || ref.size(1) != clip.height() || ref.size(2) != clip.width()) {
      throw DataError("reference image must be RGB and match the frame size");
    }
    auto track = read_landmark_file(landmarks);
    if (static_cast<int64_t>(track.size()) < clip.length()) {
      throw DataError("landmark file covers " + std::to_string(track.size()) + " frames, input has " +
                      std::to_string(clip.length()));
    }
    track.resize(static_cast<std::size_t>(clip.length()));
    auto maps = landmark_maps(track, static_cast<int>(clip.height()), static_cast<int>(clip.width()));
    if (!rc.train.use_landmarks) maps.zero_();

    auto generator = load_generator(checkpoint, rc.train.generator);
    const auto result = inpaint_clip(generator, clip, MaskSequence{m.unsqueeze(0)}, maps, ref);
    for (std::size_t t = 0; t < names.size(); ++t) {
      write_image(fs::path(out) / names[t], result.frames[static_cast<int64_t>(t)]);
    }
    os << "inpainted " << names.size() << " frames -> " << out << '\n';
    return kExitOk;
  }
};

struct EvaluateCommand {
  std::string gt, mask, config, region = "full", out, extractor_kind, extractor_weights;
  uint64_t extractor_seed = 0;
  std::vector<std::string> preds;
  bool plots = false;
  CLI::Option *o_kind{}, *o_seed{}, *o_weights{};
  GeometryFlags geometry;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "Score prediction directories against ground truth");
    c->add_option("--gt", gt, "Ground-truth directory (frames or one sub-directory per clip)")->required();
    c->add_option("--pred", preds, "Prediction directory as label=dir (repeatable)")->required();
    c->add_option("--mask", mask, "Mask PNG; default is the configured HMD geometry");
    c->add_option("--config", config, "Run config providing mask geometry and extractor");
    c->add_option("--region", region, "Scoring region: full | masked")->capture_default_str();
    o_kind = c->add_option("--extractor", extractor_kind, "Feature extractor kind");
    o_seed = c->add_option("--extractor-seed", extractor_seed, "Seed of the random-projection extractor");
    o_weights = c->add_option("--extractor-weights", extractor_weights, "TorchScript extractor file");
    c->add_option("--out", out, "Directory for report.txt / report.json");
    c->add_flag("--plots", plots, "Also write one bar-chart PNG per metric");
    geometry.add(c);
  }

  int run(std::ostream& os) {
    RunConfig rc;
    if (!config.empty()) rc = load_run_config(config);
    auto ex = rc.train.extractor;
    if (o_kind->count()) ex.kind = extractor_kind;
    if (o_seed->count()) ex.seed = extractor_seed;
    if (o_weights->count()) ex.weights_path = extractor_weights;
    geometry.apply(rc.train.mask);

    EvaluationRequest req;
    req.ground_truth = gt;
    req.geometry = rc.train.mask;
    req.mode = region_mode_from_string(region);
    if (!mask.empty()) req.mask_file = mask;
    json pred_json = json::object();
    for (const auto& p : preds) {
      const auto eq = p.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == p.size()) {
        throw ConfigError("--pred expects label=dir, got '" + p + "'");
      }
      req.predictions.emplace_back(p.substr(0, eq), p.substr(eq + 1));
      pred_json[p.substr(0, eq)] = p.substr(eq + 1);
    }
    req.geometry.validate();
    const fs::path out_dir = out.empty() ? fs::path(".") : fs::path(out);
    write_json(out_dir / "resolved_config.json",
               {{"command", "evaluate"}, {"gt", gt}, {"predictions", pred_json}, {"mask", mask},
                {"geometry", geometry_json(req.geometry)}, {"region", region},
                {"extractor", {{"kind", ex.kind}, {"seed", ex.seed}, {"weights", ex.weights_path}}}});

    const auto extractor = make_feature_extractor(ex);
    const auto report = evaluate_directories(req, *extractor);
    const auto text = render_report(report);
    os << text;
    std::ofstream(out_dir / "report.txt") << text;
    std::ofstream clips_out(out_dir / "clips.txt");
    for (const auto& m : report.models) clips_out << "[" << m.label << "]\n" << render_clip_table(m) << '\n';
    write_json(out_dir / "report.json", report_to_json(report));
    if (plots) render_plots(report, out_dir / "plots");
    return kExitOk;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference- and landmark-conditioned video inpainting for HMD occlusions", "hmdr"};
  app.require_subcommand(1);
  CorpusCommand corpus;
  MasksCommand masks;
  LandmarksCommand lms;
  TrainCommand train;
  InferCommand infer;
  EvaluateCommand evaluate;
  corpus.add(app);
  masks.add(app);
  lms.add(app);
  train.add(app);
  infer.add(app);
  evaluate.add(app);

  std::vector<std::string> storage{"hmdr"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const auto& name = sub->get_name();
    if (name == "make-synthetic-corpus") return corpus.run(out);
    if (name == "make-masks") return masks.run(out);
    if (name == "landmarks") return lms.run(out, err);
    if (name == "train") return train.run(out);
    if (name == "infer") return infer.run(out);
    if (name == "evaluate") return evaluate.run(out);
    err << "error: unknown command " << name << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hmdr
