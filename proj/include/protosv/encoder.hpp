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
#include <memory>
#include <string>
#include <vector>

#include "protosv/features.hpp"
#include "protosv/nn.hpp"
#include "protosv/rng.hpp"

namespace protosv {

enum class Arch { resnet34, small };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct EncoderConfig {
  Arch arch = Arch::resnet34;
  // Residual stage widths for resnet34 (4 entries); conv block widths for
  // small (2 entries).
  std::vector<int> channel_widths = {32, 64, 128, 256};
  int embedding_dim = 256;
  int n_mels = 40;

  void validate() const;
};

// Frame-level features after the convolutional trunk: one row per
// time-downsampled frame, D columns (the trunk's final channel width).
struct FrameFeatures {
  Eigen::MatrixXd matrix;  // T' x D
};

using Embedding = Eigen::VectorXd;

// Arithmetic mean over the time axis.
Eigen::VectorXd temporal_average_pool(const FrameFeatures& ff);

// Variable-length feature matrix -> fixed embedding_dim vector. The trunk
// treats the input as a 1-channel mel x time map; both axes downsample by
// the total stride (8 for resnet34, 4 for small). Frequency is collapsed by
// averaging after the last stage so pooling over time is all that remains,
// then a dense layer maps the pooled vector to the embedding.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, Rng& init_rng);

  const EncoderConfig& config() const { return cfg_; }
  int total_time_stride() const;
  int min_input_frames() const { return total_time_stride(); }
  int frame_dim() const;  // D
  int out_frames(int t) const;  // T' for a T-frame input

  // Inference mode (frozen batch statistics); const and thread-safe.
  FrameFeatures extract_frames(const FeatureMatrix& f) const;
  Embedding embed(const FeatureMatrix& f) const;

  // Training mode: one call per episode/batch. Returns embeddings with one
  // row per input. backward() takes the matching gradient matrix.
  Eigen::MatrixXd forward_train(const std::vector<const FeatureMatrix*>& batch);
  void backward(const Eigen::MatrixXd& grad_embeddings);

  std::vector<nn::Parameter*> parameters();
  std::vector<std::pair<std::string, Eigen::VectorXd*>> buffers();
  void zero_grad();
  std::size_t num_scalar_parameters();

 private:
  nn::Tensor3 to_tensor(const FeatureMatrix& f) const;
  void check_input(const FeatureMatrix& f) const;
  nn::Tensor3 trunk_infer(const nn::Tensor3& x) const;
  nn::Batch trunk_forward(const nn::Batch& xs);
  nn::Batch trunk_backward(const nn::Batch& dys);

  EncoderConfig cfg_;
  std::unique_ptr<nn::Conv2d> stem_conv_;
  std::unique_ptr<nn::BatchNorm2d> stem_bn_;
  nn::ReLU stem_relu_;
  std::vector<nn::BasicBlock> blocks_;   // resnet34 trunk
  std::vector<nn::Conv2d> small_convs_;  // small trunk
  std::vector<nn::BatchNorm2d> small_bns_;
  std::vector<nn::ReLU> small_relus_;
  std::unique_ptr<nn::Linear> head_;

  // training caches for the pooling stages
  std::vector<int> cached_h_, cached_w_;
};

}  // namespace protosv
