#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "glyphforge/corpus.hpp"
#include "glyphforge/losses.hpp"
#include "glyphforge/model.hpp"

namespace glyphforge {

struct TrainConfig {
  double lr = 2e-5;
  int batch = 16;
  double lambda1 = 0.5;
  double lambda2 = 1.0;
  int steps_stage1 = 4000;
  int steps_stage2 = 1000;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int sample_every = 500;  // periodic PGM renders, 0 disables

  void validate() const {
    if (lr <= 0 || batch < 1 || steps_stage1 < 0 || steps_stage2 < 0)
      throw UsageError("train config: lr, batch and step counts must be positive");
  }
};

// Versioned binary snapshot: parameters as little-endian float32, optimizer
// moments, stage/step counters and the training seed (batches are a pure
// function of seed and step, so the seed is the whole rng state).
struct Checkpoint {
  std::uint32_t format_version = 1;
  ModelConfig model;
  int stage = 1;
  std::uint64_t step = 0;
  std::uint64_t train_seed = 0;
  std::vector<std::pair<std::string, ag::TensorT<float>>> params;
  std::uint64_t adam_t = 0;
  std::vector<float> adam_m, adam_v;  // concatenated in parameter order, may be empty
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainOutput {
  Checkpoint checkpoint;
  std::vector<losses::LossReport> reports;
};

// Stage 1 trains everything under Eq.-7 style total; stage 2 adds the spacing
// penalty and freezes every content.* parameter (moments untouched).
TrainOutput train_stage1(const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         int steps, const std::string& out_dir = "");
TrainOutput train_stage2(const Corpus& corpus, const Checkpoint& stage1, const TrainConfig& tcfg,
                         int steps, const std::string& out_dir = "");
// Continue the checkpoint's stage for extra_steps.
TrainOutput resume_training(const Corpus& corpus, const Checkpoint& ckpt, const TrainConfig& tcfg,
                            int extra_steps, const std::string& out_dir = "");

// Restore a model from checkpointed parameters.
std::unique_ptr<DnaModel<float>> model_from_checkpoint(const Checkpoint& ckpt);

// Model configuration sized for a corpus (vocabulary sizes filled in).
ModelConfig model_config_for(const Corpus& corpus, ModelConfig base = {});

double window_mean_total(const std::vector<losses::LossReport>& reports, std::size_t from,
                         std::size_t count);
double window_mean_sp(const std::vector<losses::LossReport>& reports, std::size_t from,
                      std::size_t count);

}  // namespace glyphforge
