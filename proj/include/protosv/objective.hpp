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
#include <string>
#include <vector>

namespace protosv {

enum class TrainMode { vanilla, meta, meta_global };

std::string mode_name(TrainMode m);
TrainMode mode_from_name(const std::string& name);

struct LossConfig {
  double lambda = 1.0;
  TrainMode mode = TrainMode::meta_global;

  void validate() const;
};

// Per-class means of support embeddings; row c-1 belongs to local label c.
struct Prototypes {
  Eigen::MatrixXd matrix;  // n_way x dim
};

// Embedding matrices are row-per-sample throughout this module. Local labels
// are 1..n_way, global labels 1..C'.

Prototypes compute_prototypes(const Eigen::MatrixXd& support_embs,
                              const std::vector<int>& local_labels, int n_way);

// d(x, p) = x . p / (||p|| + eps): cosine similarity carrying the query's
// own length as a scale. Only the prototype is normalized.
double scaled_cosine(const Eigen::VectorXd& x, const Eigen::VectorXd& p);

// Mean over queries of -log softmax(true label) with scaled-cosine logits
// against the episode prototypes.
double episode_loss(const Eigen::MatrixXd& query_embs,
                    const std::vector<int>& local_labels,
                    const Prototypes& protos);

// Cross-entropy of every sample against all C' global prototype rows,
// averaged over the sample count.
double global_loss(const Eigen::MatrixXd& embs,
                   const std::vector<int>& global_labels,
                   const Eigen::MatrixXd& omega);

struct LossBreakdown {
  double total = 0.0;
  double episode_term = 0.0;
  double global_term = 0.0;
};

// Everything a training step consumes: the objective value plus gradients
// with respect to all embedding inputs and the global prototypes.
struct LossGrads {
  LossBreakdown value;
  Eigen::MatrixXd d_support;  // same shape as support_embs (empty in vanilla)
  Eigen::MatrixXd d_query;    // query grads; carries the batch grads in vanilla
  Eigen::MatrixXd d_omega;    // same shape as omega (zero in meta mode)
};

struct EpisodeBatch {
  Eigen::MatrixXd support_embs;  // (n_way*k_shot) x dim
  std::vector<int> support_local;
  std::vector<int> support_global;
  Eigen::MatrixXd query_embs;  // (n_way*m_query) x dim
  std::vector<int> query_local;
  std::vector<int> query_global;
  int n_way = 0;
};

// meta:        L_e only.
// meta_global: L_e + lambda * L_g over S u Q.
// Gradients flow through the prototypes into the support embeddings (no
// stop-gradient) and into omega when the global term is active.
LossGrads combined_loss(const EpisodeBatch& batch, const Eigen::MatrixXd& omega,
                        const LossConfig& cfg);

// vanilla: the fixed-length batch plays the role of S u Q in the global
// term; no episode term.
LossGrads vanilla_loss(const Eigen::MatrixXd& batch_embs,
                       const std::vector<int>& global_labels,
                       const Eigen::MatrixXd& omega, const LossConfig& cfg);

// Zero-mean gaussian entries with scale 1/sqrt(dim), one row per class.
Eigen::MatrixXd init_global_prototypes(int num_classes, int dim,
                                       std::uint64_t seed);

}  // namespace protosv
