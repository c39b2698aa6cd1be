#include "hmdr/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "hmdr/errors.hpp"

namespace hmdr {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  weights.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (clip_length < 1) throw ConfigError("clip_length must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (device != "cpu") throw ConfigError("unsupported device '" + device + "' (this build is CPU-only)");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) throw ConfigError("grad_clip must be >= 0");
  if (d_steps < 1) throw ConfigError("d_steps must be >= 1");
  if (reference_index >= clip_length) throw ConfigError("reference_index must be < clip_length");
  generator.validate();
  discriminator.validate();
  mask.validate();
}

void RunConfig::validate() const {
  train.validate();
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

namespace {

void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + std::string(section) + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown config key '" + std::string(section) + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json shift_json(const ShiftSpec& s) {
  return {{"fraction", s.shift_fraction}, {"direction", to_string(s.direction)}, {"learnable", s.learnable}};
}

void read_shift(const json& j, std::string_view section, ShiftSpec& s) {
  check_keys(j, section, {"fraction", "direction", "learnable"});
  read(j, "fraction", s.shift_fraction);
  if (j.contains("direction")) s.direction = shift_direction_from_string(j.at("direction").get<std::string>());
  read(j, "learnable", s.learnable);
}

json model_json(const TrainConfig& t) {
  const auto& g = t.generator;
  const auto& d = t.discriminator;
  return {
      {"loss_weights",
       {{"adv", t.weights.adv}, {"fer", t.weights.fer}, {"style", t.weights.style},
        {"vgg", t.weights.vgg}, {"recon", t.weights.recon}}},
      {"generator",
       {{"base_channels", g.base_channels},
        {"max_channels", g.max_channels},
        {"negative_slope", g.negative_slope},
        {"shift", shift_json(g.shift)},
        {"attention_after_downsample", g.attention_after_downsample},
        {"attention_before_dilation", g.attention_before_dilation},
        {"dilations", g.dilations},
        {"attention_reduction", g.attention_reduction}}},
      {"discriminator",
       {{"base_channels", d.base_channels},
        {"max_channels", d.max_channels},
        {"kernel_size", d.kernel_size},
        {"strides", d.strides},
        {"negative_slope", d.negative_slope},
        {"shift", shift_json(d.shift)},
        {"spectral_norm", d.spectral_norm}}},
      {"mask",
       {{"top", t.mask.top}, {"bottom", t.mask.bottom}, {"left", t.mask.left},
        {"right", t.mask.right}, {"corner_radius", t.mask.corner_radius}}},
      {"extractor",
       {{"kind", t.extractor.kind}, {"seed", t.extractor.seed},
        {"stage_channels", t.extractor.stage_channels}, {"weights", t.extractor.weights_path}}},
      {"scorer", {{"kind", t.scorer.kind}, {"seed", t.scorer.seed}, {"weights", t.scorer.weights_path}}},
  };
}

json shaping_train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"betas", {t.beta1, t.beta2}}, {"batch_size", t.batch_size},
          {"clip_length", t.clip_length},     {"seed", t.seed},                 {"device", t.device},
          {"grad_clip", t.grad_clip},         {"d_steps", t.d_steps},           {"use_landmarks", t.use_landmarks},
          {"reference_index", t.reference_index}};
}

}  // namespace

json to_json(const RunConfig& c) {
  json j = model_json(c.train);
  json train = shaping_train_json(c.train);
  train["iterations"] = c.train.iterations;
  train["checkpoint_every"] = c.train.checkpoint_every;
  j["train"] = train;
  j["manifest"] = c.manifest.generic_string();
  j["output_dir"] = c.output_dir.generic_string();
  return j;
}

void apply_json(RunConfig& c, const json& j) {
  try {
    check_keys(j, "config", {"train", "loss_weights", "generator", "discriminator", "mask", "extractor",
                             "scorer", "manifest", "output_dir"});
    auto& t = c.train;
    if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("train")) {
      const auto& s = j.at("train");
      check_keys(s, "train",
                 {"learning_rate", "betas", "batch_size", "clip_length", "iterations", "seed", "device",
                  "checkpoint_every", "grad_clip", "d_steps", "use_landmarks", "reference_index"});
      read(s, "learning_rate", t.learning_rate);
      if (s.contains("betas")) {
        const auto b = s.at("betas").get<std::vector<double>>();
        if (b.size() != 2) throw ConfigError("train.betas must have two entries");
        t.beta1 = b[0];
        t.beta2 = b[1];
      }
      read(s, "batch_size", t.batch_size);
      read(s, "clip_length", t.clip_length);
      read(s, "iterations", t.iterations);
      read(s, "seed", t.seed);
      read(s, "device", t.device);
      read(s, "checkpoint_every", t.checkpoint_every);
      read(s, "grad_clip", t.grad_clip);
      read(s, "d_steps", t.d_steps);
      read(s, "use_landmarks", t.use_landmarks);
      read(s, "reference_index", t.reference_index);
    }
    if (j.contains("loss_weights")) {
      const auto& s = j.at("loss_weights");
      check_keys(s, "loss_weights", {"adv", "fer", "style", "vgg", "recon"});
      read(s, "adv", t.weights.adv);
      read(s, "fer", t.weights.fer);
      read(s, "style", t.weights.style);
      read(s, "vgg", t.weights.vgg);
      read(s, "recon", t.weights.recon);
    }
    if (j.contains("generator")) {
      const auto& s = j.at("generator");
      auto& g = t.generator;
      check_keys(s, "generator",
                 {"base_channels", "max_channels", "negative_slope", "shift", "attention_after_downsample",
                  "attention_before_dilation", "dilations", "attention_reduction"});
      read(s, "base_channels", g.base_channels);
      read(s, "max_channels", g.max_channels);
      read(s, "negative_slope", g.negative_slope);
      if (s.contains("shift")) read_shift(s.at("shift"), "generator.shift", g.shift);
      read(s, "attention_after_downsample", g.attention_after_downsample);
      read(s, "attention_before_dilation", g.attention_before_dilation);
      read(s, "dilations", g.dilations);
      read(s, "attention_reduction", g.attention_reduction);
    }
    if (j.contains("discriminator")) {
      const auto& s = j.at("discriminator");
      auto& d = t.discriminator;
      check_keys(s, "discriminator",
                 {"base_channels", "max_channels", "kernel_size", "strides", "negative_slope", "shift",
                  "spectral_norm"});
      read(s, "base_channels", d.base_channels);
      read(s, "max_channels", d.max_channels);
      read(s, "kernel_size", d.kernel_size);
      read(s, "strides", d.strides);
      read(s, "negative_slope", d.negative_slope);
      if (s.contains("shift")) read_shift(s.at("shift"), "discriminator.shift", d.shift);
      read(s, "spectral_norm", d.spectral_norm);
    }
    if (j.contains("mask")) {
      const auto& s = j.at("mask");
      check_keys(s, "mask", {"top", "bottom", "left", "right", "corner_radius"});
      read(s, "top", t.mask.top);
      read(s, "bottom", t.mask.bottom);
      read(s, "left", t.mask.left);
      read(s, "right", t.mask.right);
      read(s, "corner_radius", t.mask.corner_radius);
    }
    if (j.contains("extractor")) {
      const auto& s = j.at("extractor");
      check_keys(s, "extractor", {"kind", "seed", "stage_channels", "weights"});
      read(s, "kind", t.extractor.kind);
      read(s, "seed", t.extractor.seed);
      read(s, "stage_channels", t.extractor.stage_channels);
      read(s, "weights", t.extractor.weights_path);
    }
    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      check_keys(s, "scorer", {"kind", "seed", "weights"});
      read(s, "kind", t.scorer.kind);
      read(s, "seed", t.scorer.seed);
      read(s, "weights", t.scorer.weights_path);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c;
  apply_json(c, j);
  return c;
}

void save_run_config(const fs::path& path, const RunConfig& config) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::string config_hash(const TrainConfig& config) {
  json j = model_json(config);
  j["train"] = shaping_train_json(config);
  const auto text = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hmdr
