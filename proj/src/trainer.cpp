#include "hmdr/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace fs = std::filesystem;

std::array<double, 6> LossRecord::values() const {
  return {terms.adv, terms.fer, terms.style, terms.vgg, terms.recon, total};
}

double TrainState::running_recon() const {
  if (recon_window.empty()) return 0.0;
  double s = 0.0;
  for (double v : recon_window) s += v;
  return s / static_cast<double>(recon_window.size());
}

namespace {

torch::optim::AdamOptions adam_options(const TrainConfig& c) {
  return torch::optim::AdamOptions(c.learning_rate).betas({c.beta1, c.beta2});
}

std::string describe_batch(const TrainingBatch& batch) {
  std::ostringstream os;
  os << "batch " << batch.batch_id << " [";
  for (std::size_t i = 0; i < batch.clip_names.size(); ++i) {
    os << (i ? ", " : "") << batch.clip_names[i] << '@' << batch.starts[i];
  }
  os << ']';
  return os.str();
}

void require_finite(const torch::Tensor& loss, const char* name, int64_t iteration, const TrainingBatch& batch) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << name << " loss (" << v << ") at iteration " << iteration << ", " << describe_batch(batch);
    throw NumericalError(os.str());
  }
}

void set_requires_grad(torch::nn::Module& m, bool flag) {
  for (auto& p : m.parameters()) p.requires_grad_(flag);
}

void clip(torch::nn::Module& m, double max_norm) {
  if (max_norm > 0.0) torch::nn::utils::clip_grad_norm_(m.parameters(), max_norm);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainState make_train_state(const TrainConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  TrainState s;
  s.generator = Generator(config.generator);
  s.discriminator = Discriminator(config.discriminator);
  s.generator->train();
  s.discriminator->train();
  s.opt_g = std::make_unique<torch::optim::Adam>(s.generator->parameters(), adam_options(config));
  s.opt_d = std::make_unique<torch::optim::Adam>(s.discriminator->parameters(), adam_options(config));
  return s;
}

namespace {

LossRecord step_impl(TrainState& state, const TrainingBatch& batch, const TrainContext& ctx) {
  const auto& cfg = ctx.config;
  const auto& in = batch.input;
  const int64_t it = state.iteration + 1;
  auto& G = state.generator;
  auto& D = state.discriminator;

  const auto raw = G->forward(in);
  const auto out = composite_output(raw, in.masked_frames, in.mask);

  LossRecord rec;
  rec.iteration = it;
  for (int64_t k = 0; k < cfg.d_steps; ++k) {
    state.opt_d->zero_grad();
    auto d_loss = adv_loss_d(D->forward(batch.ground_truth, in.mask), D->forward(out.detach(), in.mask));
    require_finite(d_loss, "critic", it, batch);
    d_loss.backward();
    clip(*D, cfg.grad_clip);
    state.opt_d->step();
    rec.d_loss = d_loss.item<double>();
  }

  state.opt_g->zero_grad();
  set_requires_grad(*D, false);
  LossTerms<torch::Tensor> terms;
  try {
    terms.adv = adv_loss_g(D->forward(out, in.mask));
  } catch (...) {
    set_requires_grad(*D, true);
    throw;
  }
  set_requires_grad(*D, true);
  terms.recon = recon_loss(out, batch.ground_truth);
  terms.vgg = vgg_loss(out, batch.ground_truth, ctx.extractor);
  terms.style = style_loss(out, batch.ground_truth, ctx.extractor);
  terms.fer = fer_loss(batch.ground_truth, out, ctx.scorer);
  auto total = total_loss(terms, cfg.weights);

  require_finite(terms.adv, "adv", it, batch);
  require_finite(terms.fer, "fer", it, batch);
  require_finite(terms.style, "style", it, batch);
  require_finite(terms.vgg, "vgg", it, batch);
  require_finite(terms.recon, "recon", it, batch);
  require_finite(total, "total", it, batch);

  total.backward();
  clip(*G, cfg.grad_clip);
  state.opt_g->step();

  rec.terms = {terms.adv.item<double>(), terms.fer.item<double>(), terms.style.item<double>(),
               terms.vgg.item<double>(), terms.recon.item<double>()};
  rec.total = total.item<double>();
  state.iteration = it;
  state.recon_window.push_back(rec.terms.recon);
  if (state.recon_window.size() > TrainState::kReconWindow) state.recon_window.pop_front();
  return rec;
}

}  // namespace

LossRecord train_step(TrainState& state, const TrainingBatch& batch, const TrainContext& ctx) {
  try {
    return step_impl(state, batch, ctx);
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    // Errors raised inside the loss functions do not know the batch yet.
    if (what.find("batch " + std::to_string(batch.batch_id) + " [") != std::string::npos) throw;
    throw NumericalError(what + " at iteration " + std::to_string(state.iteration + 1) + ", " +
                         describe_batch(batch));
  }
}

void save_checkpoint(const fs::path& dir, const TrainState& state, const RunConfig& config,
                     const std::string& sampler_state) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  torch::save(state.generator, (tmp / "generator.pt").string());
  torch::save(state.discriminator, (tmp / "discriminator.pt").string());
  torch::save(*state.opt_g, (tmp / "optimizer_g.pt").string());
  torch::save(*state.opt_d, (tmp / "optimizer_d.pt").string());
  std::ofstream(tmp / "sampler_state.txt") << sampler_state;
  save_run_config(tmp / "config.json", config);
  {
    const auto& w = config.train.weights;
    std::ofstream m(tmp / "manifest.txt");
    m << "format_version " << kCheckpointFormatVersion << '\n'
      << "config_hash " << config_hash(config.train) << '\n'
      << "iteration " << state.iteration << '\n'
      << "lambda_adv " << fmt(w.adv) << '\n'
      << "lambda_fer " << fmt(w.fer) << '\n'
      << "lambda_style " << fmt(w.style) << '\n'
      << "lambda_vgg " << fmt(w.vgg) << '\n'
      << "lambda_recon " << fmt(w.recon) << '\n';
    if (!m) throw DataError("failed writing checkpoint manifest in " + tmp.string());
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint manifest missing: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, value, extra;
    if (!(ls >> key >> value) || (ls >> extra)) throw DataError("corrupt checkpoint manifest line: '" + line + "'");
    kv[key] = value;
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("corrupt checkpoint manifest " + path.string() + ": missing " + key);
    return it->second;
  };
  CheckpointManifest m;
  try {
    std::size_t used = 0;
    auto whole = [&](const std::string& s) {
      if (used != s.size()) throw std::invalid_argument(s);
    };
    m.format_version = std::stoi(get("format_version"), &used);
    whole(get("format_version"));
    m.config_hash = get("config_hash");
    m.iteration = std::stoll(get("iteration"), &used);
    whole(get("iteration"));
    m.weights.adv = std::stod(get("lambda_adv"));
    m.weights.fer = std::stod(get("lambda_fer"));
    m.weights.style = std::stod(get("lambda_style"));
    m.weights.vgg = std::stod(get("lambda_vgg"));
    m.weights.recon = std::stod(get("lambda_recon"));
  } catch (const std::logic_error& e) {
    throw DataError("corrupt checkpoint manifest " + path.string() + ": bad value " + e.what());
  }
  if (m.iteration < 0) throw DataError("corrupt checkpoint manifest " + path.string() + ": negative iteration");
  return m;
}

RunConfig read_checkpoint_config(const fs::path& dir) { return load_run_config(dir / "config.json"); }

LoadedCheckpoint load_checkpoint(const fs::path& dir, const TrainConfig& config) {
  const auto m = read_checkpoint_manifest(dir);
  if (m.format_version != kCheckpointFormatVersion) {
    throw DataError("checkpoint " + dir.string() + " has format version " + std::to_string(m.format_version) +
                    ", this build reads version " + std::to_string(kCheckpointFormatVersion));
  }
  const auto expected = config_hash(config);
  if (m.config_hash != expected) {
    throw ConfigError("checkpoint " + dir.string() + " was written with config " + m.config_hash +
                      ", current config hashes to " + expected);
  }
  LoadedCheckpoint out{make_train_state(config), {}};
  try {
    torch::load(out.state.generator, (dir / "generator.pt").string());
    torch::load(out.state.discriminator, (dir / "discriminator.pt").string());
    torch::load(*out.state.opt_g, (dir / "optimizer_g.pt").string());
    torch::load(*out.state.opt_d, (dir / "optimizer_d.pt").string());
  } catch (const c10::Error& e) {
    throw DataError("cannot load checkpoint tensors from " + dir.string() + ": " + e.what_without_backtrace());
  }
  std::ifstream ss(dir / "sampler_state.txt");
  if (!ss) throw DataError("checkpoint " + dir.string() + " has no sampler_state.txt");
  std::ostringstream buf;
  buf << ss.rdbuf();
  out.sampler_state = buf.str();
  out.state.iteration = m.iteration;
  return out;
}

Generator load_generator(const fs::path& dir, const GeneratorConfig& config) {
  const auto m = read_checkpoint_manifest(dir);
  if (m.format_version != kCheckpointFormatVersion) {
    throw DataError("checkpoint " + dir.string() + " has format version " + std::to_string(m.format_version));
  }
  Generator g(config);
  try {
    torch::load(g, (dir / "generator.pt").string());
  } catch (const c10::Error& e) {
    throw DataError("cannot load generator from " + dir.string() + ": " + e.what_without_backtrace());
  }
  g->eval();
  return g;
}

fs::path checkpoint_dir_name(const fs::path& output_dir, int64_t iteration) {
  char name[32];
  std::snprintf(name, sizeof(name), "iter_%06lld", static_cast<long long>(iteration));
  return output_dir / "checkpoints" / name;
}

fs::path run_training(TrainState& state, BatchSampler& sampler, const RunConfig& config,
                      const FeatureExtractor& extractor, const ExpressionScorer& scorer,
                      const TrainLoopOptions& options) {
  fs::create_directories(options.output_dir);
  std::ofstream log(options.output_dir / "loss_log.txt", std::ios::app);
  std::ofstream metrics(options.output_dir / "metrics.jsonl", std::ios::app);
  if (!log || !metrics) throw DataError("cannot write logs under " + options.output_dir.string());

  const TrainContext ctx{config.train, extractor, scorer};
  fs::path last;
  auto checkpoint = [&] {
    last = checkpoint_dir_name(options.output_dir, state.iteration);
    save_checkpoint(last, state, config, sampler.state());
    std::ofstream(options.output_dir / "checkpoints" / "latest.txt") << last.filename().string() << '\n';
  };

  while (state.iteration < config.train.iterations) {
    const auto batch = sampler.next();
    LossRecord rec;
    try {
      rec = train_step(state, batch, ctx);
    } catch (const NumericalError& e) {
      std::ofstream dump(options.output_dir / ("abort_batch_" + std::to_string(batch.batch_id) + ".txt"));
      dump << e.what() << '\n' << "batch_id " << batch.batch_id << '\n';
      for (std::size_t i = 0; i < batch.clip_names.size(); ++i) {
        dump << "clip " << batch.clip_names[i] << " start " << batch.starts[i] << '\n';
      }
      throw;
    }
    const auto v = rec.values();
    for (std::size_t i = 0; i < v.size(); ++i) log << (i ? " " : "") << fmt(v[i]);
    log << '\n';
    log.flush();
    nlohmann::json j{{"iteration", rec.iteration}, {"adv", v[0]},   {"fer", v[1]},
                     {"style", v[2]},             {"vgg", v[3]},   {"recon", v[4]},
                     {"total", v[5]},             {"d_loss", rec.d_loss},
                     {"running_recon", state.running_recon()}, {"batch_id", batch.batch_id}};
    metrics << j.dump() << '\n';
    metrics.flush();
    if (options.on_step) options.on_step(rec, state);
    if (config.train.checkpoint_every > 0 && state.iteration % config.train.checkpoint_every == 0) checkpoint();
  }
  if (last.empty() || last != checkpoint_dir_name(options.output_dir, state.iteration)) checkpoint();
  return last;
}

}  // namespace hmdr
