#pragma once

#include "convhead/generation.hpp"
#include "convhead/losses.hpp"
#include "convhead/manifest.hpp"
#include "convhead/params.hpp"

#include <string>
#include <vector>

namespace convhead {

struct TrainingConfig {
  std::string task = "listener";  // listener | talker | agent
  double w1 = 1e-3;
  double w2 = 1.0;
  double learning_rate = 2e-3;
  double decay_factor = 0.5;
  int decay_every = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-2;
  int epochs = 300;
  std::uint64_t seed = 0;
  int grad_accum = 8;
  double clip_norm = 5.0;
  double val_fraction = 0.1;
  bool freeze_fusion = false;
  double alpha_init = 0.5;
  std::string init_listener_checkpoint;
  std::string init_talker_checkpoint;
  ModelConfig model;

  void validate() const;
};

/// Task-dependent defaults: the agent fine-tune runs 50 epochs at lr 2e-4,
/// the single-role tasks 300 epochs at lr 2e-3.
TrainingConfig default_training_config(const std::string& task);

/// Applies the keys present in a JSON object onto `cfg`; unknown keys are
/// rejected with ConfigError. "model" nests the architecture block.
void apply_training_json(TrainingConfig& cfg, const std::string& json_text);
std::string training_config_json(const TrainingConfig& cfg);

/// Stepwise schedule: lr * decay_factor^floor(epoch / decay_every), epoch
/// 0-based.
double lr_at_epoch(const TrainingConfig& cfg, int epoch);

struct EpochMetrics {
  int epoch = 0;
  std::string split;  // "train" | "val"
  double l_gen = 0.0;
  double l_mot = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
};

struct TrainOutcome {
  std::string checkpoint_path;
  std::vector<EpochMetrics> log;
  double best = 0.0;    // best selection loss (val when present, else train)
  int best_epoch = -1;
};

/// Trains the configured task over the given manifests and writes
/// checkpoint_best.vckp plus metrics.jsonl under out_dir. Deterministic for a
/// fixed seed.
TrainOutcome train_task(const TrainingConfig& cfg,
                        const std::vector<std::string>& train_manifests,
                        const std::vector<std::string>& val_manifests,
                        const std::string& out_dir);

/// Decoupled-weight-decay Adam over a fixed tensor subset.
class AdamW {
 public:
  AdamW(std::vector<ad::Param*> tensors, double beta1, double beta2, double weight_decay,
        double eps = 1e-8);

  /// One update from the accumulated gradients (callers average beforehand).
  void step(double lr);
  const std::vector<ad::Param*>& tensors() const { return tensors_; }

 private:
  std::vector<ad::Param*> tensors_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  double beta1_;
  double beta2_;
  double weight_decay_;
  double eps_;
  long step_count_ = 0;
};

/// Global-norm gradient clipping over a tensor subset; returns the norm.
double clip_gradients(const std::vector<ad::Param*>& tensors, double max_norm);

}  // namespace convhead
