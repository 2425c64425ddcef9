// Copyright 2026 The protosv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "protosv/encoder.hpp"
#include "protosv/objective.hpp"
#include "protosv/sampler.hpp"

namespace protosv {

struct TrainConfig {
  std::string optimizer = "sgd_nesterov";
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_init = 0.1;
  double lr_decay_factor = 10.0;
  std::string lr_decay_rule = "plateau";
  std::int64_t max_steps = 10000;
  std::int64_t checkpoint_every = 1000;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::meta_global;
  // plateau rule: decay when the validation metric fails to improve for
  // plateau_patience consecutive evaluations; stop at the third plateau
  std::int64_t eval_interval = 100;
  int plateau_patience = 5;
  int val_episodes = 25;
  // vanilla mode
  int batch_size = 64;
  double vanilla_seconds = 2.0;

  EpisodeConfig episode;
  FeatureConfig features;
  EncoderConfig encoder;
  LossConfig loss;

  void validate() const;
};

// Nesterov-momentum SGD with uniform weight decay on every parameter.
class SgdNesterov {
 public:
  SgdNesterov(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<nn::Parameter*>& params, double lr);

  std::vector<Eigen::VectorXd>& buffers() { return buf_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double momentum_, weight_decay_;
  std::vector<Eigen::VectorXd> buf_;
};

// Everything one training run mutates. Serializes completely, so a reloaded
// state continues bitwise-identically to an uninterrupted run.
struct TrainState {
  TrainState(const TrainConfig& cfg, const Manifest& train_manifest);

  Eigen::Map<Eigen::MatrixXd> omega_matrix();

  TrainConfig cfg;
  Encoder encoder;
  nn::Parameter omega;  // flattened C' x embedding_dim
  std::vector<std::string> class_speakers;  // row order of omega
  SgdNesterov opt;
  Rng rng;  // episode/batch sampling stream
  std::int64_t step = 0;
  double lr = 0.0;
  // plateau bookkeeping
  double best_val = -1.0;
  int bad_evals = 0;
  int decays = 0;

  std::vector<nn::Parameter*> all_parameters();
};

// One optimizer step on an episode (meta / meta_global) or a vanilla batch.
// Throws NumericError with step diagnostics if the loss is non-finite.
LossBreakdown train_step(TrainState& st, const Episode& ep,
                         const LossConfig& lcfg);
LossBreakdown train_step(TrainState& st, const std::vector<EpisodeItem>& batch,
                         const LossConfig& lcfg);

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path metrics_csv;
  std::int64_t steps_run = 0;
  double best_val_accuracy = 0.0;
};

// Full optimization loop: sample -> step, validation every eval_interval
// steps (N-way 1-shot accuracy on the held-out speakers, N = min(10, #val)),
// plateau-based lr decay, checkpointing, and a metrics csv with rows
// (step, lr, episode_loss, global_loss, val_acc).
FitResult fit(const Manifest& train_manifest, const Manifest& val_manifest,
              const TrainConfig& cfg, const std::filesystem::path& out_dir);

// ---- checkpoint container -------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, TrainState& st);

// Full resume: the state must have been constructed with a matching config
// and training manifest (validated by name/shape).
void load_checkpoint(const std::filesystem::path& path, TrainState& st);

// Inference-only view of a checkpoint.
struct LoadedModel {
  EncoderConfig encoder_cfg;
  FeatureConfig feature_cfg;
  std::unique_ptr<Encoder> encoder;
  Eigen::MatrixXd omega;
  std::vector<std::string> class_speakers;
  std::int64_t step = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace protosv
