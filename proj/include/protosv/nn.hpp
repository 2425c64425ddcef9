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
#include <utility>
#include <vector>

#include "protosv/rng.hpp"

namespace protosv::nn {

// Feature map of one sample: `data` is ch x (h*w), column y*w+x holds the
// channel vector at spatial position (y, x). h indexes mel bins, w time.
struct Tensor3 {
  int ch = 0, h = 0, w = 0;
  Eigen::MatrixXd data;

  Tensor3() = default;
  Tensor3(int c, int h_, int w_) : ch(c), h(h_), w(w_), data(c, h_ * w_) {}
};

using Batch = std::vector<Tensor3>;

struct Parameter {
  std::string name;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;

  Parameter(std::string n, Eigen::Index size)
      : name(std::move(n)),
        value(Eigen::VectorXd::Zero(size)),
        grad(Eigen::VectorXd::Zero(size)) {}
};

// All layers follow the same protocol: `infer` is const and touches no
// state (safe to call concurrently); `forward` runs in training mode and
// caches whatever `backward` needs. `backward` returns the input gradient
// and accumulates parameter gradients (callers zero them between steps).

class Conv2d {
 public:
  // Square kernel, no bias (a BatchNorm follows every conv here).
  Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride,
         int pad, Rng& rng);

  Tensor3 infer(const Tensor3& x) const;
  Batch forward(const Batch& xs);
  Batch backward(const Batch& dys);

  Parameter& weight() { return w_; }
  const Parameter& weight() const { return w_; }
  int out_channels() const { return out_ch_; }
  static int out_extent(int in, int ksize, int stride, int pad) {
    return (in + 2 * pad - ksize) / stride + 1;
  }

 private:
  Tensor3 apply(const Tensor3& x) const;
  Eigen::MatrixXd im2col(const Tensor3& x, int oh, int ow) const;

  int in_ch_, out_ch_, k_, stride_, pad_;
  Parameter w_;  // out_ch x (in_ch*k*k), column-major flat
  Batch cached_inputs_;
};

class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int channels);

  Tensor3 infer(const Tensor3& x) const;
  // Batch statistics are pooled over every spatial position of every sample
  // in the batch, so one training step normalizes the whole episode at once.
  Batch forward(const Batch& xs);
  Batch backward(const Batch& dys);

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Eigen::VectorXd& running_mean() { return running_mean_; }
  Eigen::VectorXd& running_var() { return running_var_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int channels_;
  Parameter gamma_, beta_;
  Eigen::VectorXd running_mean_, running_var_;
  // training caches
  Batch cached_xhat_;
  Eigen::VectorXd cached_inv_std_;
  double cached_count_ = 0;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
};

class ReLU {
 public:
  Tensor3 infer(const Tensor3& x) const;
  Batch forward(const Batch& xs);
  Batch backward(const Batch& dys);

 private:
  Batch cached_inputs_;
};

// Dense layer on column vectors; batches are (in_dim x B) matrices.
class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim, Rng& rng);

  Eigen::MatrixXd infer(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy);

  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

 private:
  int in_dim_, out_dim_;
  Parameter w_;  // out_dim x in_dim
  Parameter b_;
  Eigen::MatrixXd cached_input_;
};

// conv-bn-relu-conv-bn + shortcut, post-add ReLU. The shortcut is a
// 1x1 conv + bn when shape changes, identity otherwise.
class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in_ch, int out_ch, int stride,
             Rng& rng);

  Tensor3 infer(const Tensor3& x) const;
  Batch forward(const Batch& xs);
  Batch backward(const Batch& dys);

  void collect_parameters(std::vector<Parameter*>* out);
  void collect_buffers(std::vector<std::pair<std::string, Eigen::VectorXd*>>* out);

 private:
  bool projecting_;
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
  ReLU relu1_, relu2_;
  std::unique_ptr<Conv2d> sc_conv_;
  std::unique_ptr<BatchNorm2d> sc_bn_;
};

void collect_bn_buffers(BatchNorm2d& bn,
                        std::vector<std::pair<std::string, Eigen::VectorXd*>>* out);

}  // namespace protosv::nn
