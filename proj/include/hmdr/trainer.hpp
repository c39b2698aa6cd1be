#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "hmdr/config.hpp"
#include "hmdr/data.hpp"
#include "hmdr/losses.hpp"
#include "hmdr/networks.hpp"

namespace hmdr {

/// The five loss components, their weighted total, and the critic loss.
struct LossRecord {
  int64_t iteration = 0;
  LossTerms<double> terms;
  double total = 0.0;
  double d_loss = 0.0;

  /// adv fer style vgg recon total
  std::array<double, 6> values() const;
};

struct TrainState {
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;
  int64_t iteration = 0;
  std::deque<double> recon_window;  // last kReconWindow recon values
  static constexpr std::size_t kReconWindow = 10;

  double running_recon() const;
};

/// Fresh networks (seeded from config.seed) and optimizers.
TrainState make_train_state(const TrainConfig& config);

struct TrainContext {
  const TrainConfig& config;
  const FeatureExtractor& extractor;
  const ExpressionScorer& scorer;
};

/// d_steps critic updates on real vs detached composite, then one generator
/// update on the weighted total. Throws NumericalError naming the batch on a
/// non-finite loss, before any parameter changes from that loss.
LossRecord train_step(TrainState& state, const TrainingBatch& batch, const TrainContext& ctx);

inline constexpr int kCheckpointFormatVersion = 1;

/// Directory with manifest.txt, generator.pt, discriminator.pt,
/// optimizer_g.pt, optimizer_d.pt, sampler_state.txt and config.json.
/// Written to a sibling temporary directory and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const RunConfig& config,
                     const std::string& sampler_state);

struct CheckpointManifest {
  int format_version = 0;
  std::string config_hash;
  int64_t iteration = 0;
  LossWeights weights;
};

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);
/// The run config stored alongside a checkpoint.
RunConfig read_checkpoint_config(const std::filesystem::path& dir);

struct LoadedCheckpoint {
  TrainState state;
  std::string sampler_state;
};

/// Refuses version or config-hash mismatches. Nothing is returned unless every
/// file loads.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const TrainConfig& config);

/// Generator only, for inference.
Generator load_generator(const std::filesystem::path& dir, const GeneratorConfig& config);

struct TrainLoopOptions {
  std::filesystem::path output_dir;
  std::function<void(const LossRecord&, const TrainState&)> on_step;
};

/// Runs until state.iteration reaches config.train.iterations, appending to
/// loss_log.txt (six columns) and metrics.jsonl under output_dir and writing
/// checkpoints to output_dir/checkpoints/iter_NNNNNN. Returns the final
/// checkpoint directory.
std::filesystem::path run_training(TrainState& state, BatchSampler& sampler, const RunConfig& config,
                                   const FeatureExtractor& extractor, const ExpressionScorer& scorer,
                                   const TrainLoopOptions& options);

std::filesystem::path checkpoint_dir_name(const std::filesystem::path& output_dir, int64_t iteration);

}  // namespace hmdr
