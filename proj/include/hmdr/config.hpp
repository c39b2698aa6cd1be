#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

#include "hmdr/data.hpp"
#include "hmdr/extractors.hpp"
#include "hmdr/losses.hpp"
#include "hmdr/networks.hpp"

namespace hmdr {

struct TrainConfig {
  double learning_rate = 9.7e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LossWeights weights;
  int64_t batch_size = 2;
  int64_t clip_length = 16;
  int64_t iterations = 1000;
  uint64_t seed = 0;
  std::string device = "cpu";
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  double grad_clip = 0.0;        // 0: off
  int64_t d_steps = 1;           // discriminator updates per generator update
  bool use_landmarks = true;
  int64_t reference_index = 0;   // < 0: random per sample
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  ExtractorConfig extractor;
  ScorerConfig scorer;
  MaskGeometry mask;

  void validate() const;
};

struct RunConfig {
  TrainConfig train;
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "runs/default";

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Overlays the keys present in `j` onto `config`. Unknown keys are errors.
void apply_json(RunConfig& config, const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

/// FNV-1a over the settings that shape parameters and the random streams.
/// Iteration budget, cadence and paths are left out so a resumed run with a
/// longer budget still matches its checkpoint.
std::string config_hash(const TrainConfig& config);

}  // namespace hmdr
