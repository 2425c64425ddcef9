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

#include "protosv/encoder.hpp"

#include "protosv/error.hpp"

namespace protosv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
// Blocks per residual stage, the standard 34-layer arrangement.
constexpr int kResnet34Depths[4] = {3, 4, 6, 3};
}  // namespace

std::string arch_name(Arch a) {
  return a == Arch::resnet34 ? "resnet34" : "small";
}

Arch arch_from_name(const std::string& name) {
  if (name == "resnet34") return Arch::resnet34;
  if (name == "small") return Arch::small;
  throw ConfigError("unknown encoder arch '" + name +
                    "' (expected resnet34 or small)");
}

void EncoderConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  const std::size_t want = arch == Arch::resnet34 ? 4 : 2;
  if (channel_widths.size() != want)
    throw ConfigError("channel_widths must have " + std::to_string(want) +
                      " entries for arch " + arch_name(arch));
  for (int w : channel_widths)
    if (w < 1) throw ConfigError("channel widths must be positive");
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.arch == Arch::resnet34) {
    const auto& w = cfg_.channel_widths;
    stem_conv_ = std::make_unique<nn::Conv2d>("stem.conv", 1, w[0], 3, 1, 1,
                                              init_rng);
    stem_bn_ = std::make_unique<nn::BatchNorm2d>("stem.bn", w[0]);
    int in_ch = w[0];
    for (int stage = 0; stage < 4; ++stage) {
      for (int b = 0; b < kResnet34Depths[stage]; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        blocks_.emplace_back("stage" + std::to_string(stage + 1) + ".block" +
                                 std::to_string(b + 1),
                             in_ch, w[stage], stride, init_rng);
        in_ch = w[stage];
      }
    }
    head_ = std::make_unique<nn::Linear>("head", in_ch, cfg_.embedding_dim,
                                         init_rng);
  } else {
    const auto& w = cfg_.channel_widths;
    int in_ch = 1;
    for (int i = 0; i < 2; ++i) {
      small_convs_.emplace_back("block" + std::to_string(i + 1) + ".conv",
                                in_ch, w[i], 3, 2, 1, init_rng);
      small_bns_.emplace_back("block" + std::to_string(i + 1) + ".bn", w[i]);
      small_relus_.emplace_back();
      in_ch = w[i];
    }
    head_ = std::make_unique<nn::Linear>("head", in_ch, cfg_.embedding_dim,
                                         init_rng);
  }
}

int Encoder::total_time_stride() const {
  return cfg_.arch == Arch::resnet34 ? 8 : 4;
}

int Encoder::frame_dim() const { return cfg_.channel_widths.back(); }

int Encoder::out_frames(int t) const {
  int v = t;
  const int halvings = cfg_.arch == Arch::resnet34 ? 3 : 2;
  for (int i = 0; i < halvings; ++i) v = (v + 1) / 2;
  return v;
}

nn::Tensor3 Encoder::to_tensor(const FeatureMatrix& f) const {
  nn::Tensor3 x(1, f.n_mels(), f.frames());
  // column y*w + x of the tensor holds mel bin y at frame x
  for (int y = 0; y < f.n_mels(); ++y)
    for (int t = 0; t < f.frames(); ++t)
      x.data(0, static_cast<Eigen::Index>(y) * f.frames() + t) = f.values(y, t);
  return x;
}

void Encoder::check_input(const FeatureMatrix& f) const {
  if (f.n_mels() != cfg_.n_mels)
    throw DataError("encoder expects " + std::to_string(cfg_.n_mels) +
                    " mel rows, got " + std::to_string(f.n_mels()));
  if (f.frames() < min_input_frames())
    throw DataError("input has " + std::to_string(f.frames()) +
                    " frames, below the encoder minimum of " +
                    std::to_string(min_input_frames()));
}

nn::Tensor3 Encoder::trunk_infer(const nn::Tensor3& x) const {
  if (cfg_.arch == Arch::resnet34) {
    nn::Tensor3 y = stem_relu_.infer(stem_bn_->infer(stem_conv_->infer(x)));
    for (const auto& block : blocks_) y = block.infer(y);
    return y;
  }
  nn::Tensor3 y = x;
  for (std::size_t i = 0; i < small_convs_.size(); ++i)
    y = small_relus_[i].infer(small_bns_[i].infer(small_convs_[i].infer(y)));
  return y;
}

nn::Batch Encoder::trunk_forward(const nn::Batch& xs) {
  if (cfg_.arch == Arch::resnet34) {
    nn::Batch ys = stem_relu_.forward(stem_bn_->forward(stem_conv_->forward(xs)));
    for (auto& block : blocks_) ys = block.forward(ys);
    return ys;
  }
  nn::Batch ys = xs;
  for (std::size_t i = 0; i < small_convs_.size(); ++i)
    ys = small_relus_[i].forward(small_bns_[i].forward(small_convs_[i].forward(ys)));
  return ys;
}

nn::Batch Encoder::trunk_backward(const nn::Batch& dys) {
  if (cfg_.arch == Arch::resnet34) {
    nn::Batch d = dys;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
      d = it->backward(d);
    return stem_conv_->backward(stem_bn_->backward(stem_relu_.backward(d)));
  }
  nn::Batch d = dys;
  for (std::size_t i = small_convs_.size(); i-- > 0;)
    d = small_convs_[i].backward(small_bns_[i].backward(small_relus_[i].backward(d)));
  return d;
}

FrameFeatures Encoder::extract_frames(const FeatureMatrix& f) const {
  check_input(f);
  const nn::Tensor3 y = trunk_infer(to_tensor(f));
  FrameFeatures ff;
  ff.matrix.resize(y.w, y.ch);
  for (int t = 0; t < y.w; ++t) {
    VectorXd acc = VectorXd::Zero(y.ch);
    for (int fy = 0; fy < y.h; ++fy)
      acc += y.data.col(static_cast<Eigen::Index>(fy) * y.w + t);
    ff.matrix.row(t) = (acc / y.h).transpose();
  }
  return ff;
}

Eigen::VectorXd temporal_average_pool(const FrameFeatures& ff) {
  if (ff.matrix.rows() < 1)
    throw DataError("temporal_average_pool: no frames");
  return ff.matrix.colwise().mean().transpose();
}

Embedding Encoder::embed(const FeatureMatrix& f) const {
  const VectorXd pooled = temporal_average_pool(extract_frames(f));
  return head_->infer(pooled);
}

MatrixXd Encoder::forward_train(const std::vector<const FeatureMatrix*>& batch) {
  nn::Batch xs;
  xs.reserve(batch.size());
  for (const FeatureMatrix* f : batch) {
    check_input(*f);
    xs.push_back(to_tensor(*f));
  }
  const nn::Batch ys = trunk_forward(xs);

  cached_h_.clear();
  cached_w_.clear();
  MatrixXd pooled(frame_dim(), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto& y = ys[i];
    cached_h_.push_back(y.h);
    cached_w_.push_back(y.w);
    // mean over frequency then time collapses to a plain mean over positions
    pooled.col(static_cast<Eigen::Index>(i)) = y.data.rowwise().mean();
  }
  return head_->forward(pooled).transpose();
}

void Encoder::backward(const MatrixXd& grad_embeddings) {
  const MatrixXd dpooled = head_->backward(grad_embeddings.transpose());
  nn::Batch dys;
  dys.reserve(cached_h_.size());
  for (std::size_t i = 0; i < cached_h_.size(); ++i) {
    nn::Tensor3 dy(static_cast<int>(dpooled.rows()), cached_h_[i], cached_w_[i]);
    const double inv = 1.0 / (static_cast<double>(cached_h_[i]) * cached_w_[i]);
    dy.data = (dpooled.col(static_cast<Eigen::Index>(i)) * inv)
                  .replicate(1, dy.data.cols());
    dys.push_back(std::move(dy));
  }
  trunk_backward(dys);
}

std::vector<nn::Parameter*> Encoder::parameters() {
  std::vector<nn::Parameter*> params;
  if (cfg_.arch == Arch::resnet34) {
    params.push_back(&stem_conv_->weight());
    params.push_back(&stem_bn_->gamma());
    params.push_back(&stem_bn_->beta());
    for (auto& b : blocks_) b.collect_parameters(&params);
  } else {
    for (std::size_t i = 0; i < small_convs_.size(); ++i) {
      params.push_back(&small_convs_[i].weight());
      params.push_back(&small_bns_[i].gamma());
      params.push_back(&small_bns_[i].beta());
    }
  }
  params.push_back(&head_->weight());
  params.push_back(&head_->bias());
  return params;
}

std::vector<std::pair<std::string, Eigen::VectorXd*>> Encoder::buffers() {
  std::vector<std::pair<std::string, Eigen::VectorXd*>> bufs;
  if (cfg_.arch == Arch::resnet34) {
    nn::collect_bn_buffers(*stem_bn_, &bufs);
    for (auto& b : blocks_) b.collect_buffers(&bufs);
  } else {
    for (auto& bn : small_bns_) nn::collect_bn_buffers(bn, &bufs);
  }
  return bufs;
}

void Encoder::zero_grad() {
  for (auto* p : parameters()) p->grad.setZero();
}

std::size_t Encoder::num_scalar_parameters() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace protosv
