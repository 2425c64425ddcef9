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

#include "protosv/nn.hpp"

#include <cmath>

#include "protosv/error.hpp"

namespace protosv::nn {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride,
               int pad, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(ksize),
      stride_(stride),
      pad_(pad),
      w_(std::move(name), static_cast<Eigen::Index>(out_ch) * in_ch * ksize * ksize) {
  const double std_dev = std::sqrt(2.0 / (in_ch * ksize * ksize));
  for (Eigen::Index i = 0; i < w_.value.size(); ++i)
    w_.value[i] = std_dev * rng.gaussian();
}

MatrixXd Conv2d::im2col(const Tensor3& x, int oh, int ow) const {
  MatrixXd col = MatrixXd::Zero(static_cast<Eigen::Index>(in_ch_) * k_ * k_,
                                static_cast<Eigen::Index>(oh) * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index pos = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < k_; ++ky) {
        const int iy = oy * stride_ - pad_ + ky;
        if (iy < 0 || iy >= x.h) continue;
        for (int kx = 0; kx < k_; ++kx) {
          const int ix = ox * stride_ - pad_ + kx;
          if (ix < 0 || ix >= x.w) continue;
          const Eigen::Index in_pos = static_cast<Eigen::Index>(iy) * x.w + ix;
          col.block(static_cast<Eigen::Index>(ky * k_ + kx) * in_ch_, pos,
                    in_ch_, 1) = x.data.col(in_pos);
        }
      }
    }
  }
  return col;
}

Tensor3 Conv2d::apply(const Tensor3& x) const {
  if (x.ch != in_ch_)
    throw DataError("conv " + w_.name + ": expected " +
                    std::to_string(in_ch_) + " input channels, got " +
                    std::to_string(x.ch));
  const int oh = out_extent(x.h, k_, stride_, pad_);
  const int ow = out_extent(x.w, k_, stride_, pad_);
  Tensor3 y(out_ch_, oh, ow);
  const Map<const MatrixXd> w(w_.value.data(), out_ch_,
                              static_cast<Eigen::Index>(in_ch_) * k_ * k_);
  y.data.noalias() = w * im2col(x, oh, ow);
  return y;
}

Tensor3 Conv2d::infer(const Tensor3& x) const { return apply(x); }

Batch Conv2d::forward(const Batch& xs) {
  cached_inputs_ = xs;
  Batch ys;
  ys.reserve(xs.size());
  for (const auto& x : xs) ys.push_back(apply(x));
  return ys;
}

Batch Conv2d::backward(const Batch& dys) {
  const Map<const MatrixXd> w(w_.value.data(), out_ch_,
                              static_cast<Eigen::Index>(in_ch_) * k_ * k_);
  Map<MatrixXd> wgrad(w_.grad.data(), out_ch_,
                      static_cast<Eigen::Index>(in_ch_) * k_ * k_);
  Batch dxs;
  dxs.reserve(dys.size());
  for (std::size_t i = 0; i < dys.size(); ++i) {
    const Tensor3& x = cached_inputs_[i];
    const Tensor3& dy = dys[i];
    const MatrixXd col = im2col(x, dy.h, dy.w);
    wgrad.noalias() += dy.data * col.transpose();

    const MatrixXd dcol = w.transpose() * dy.data;
    Tensor3 dx(x.ch, x.h, x.w);
    dx.data.setZero();
    for (int oy = 0; oy < dy.h; ++oy) {
      for (int ox = 0; ox < dy.w; ++ox) {
        const Eigen::Index pos = static_cast<Eigen::Index>(oy) * dy.w + ox;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < k_; ++kx) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= x.w) continue;
            const Eigen::Index in_pos = static_cast<Eigen::Index>(iy) * x.w + ix;
            dx.data.col(in_pos) +=
                dcol.block(static_cast<Eigen::Index>(ky * k_ + kx) * in_ch_,
                           pos, in_ch_, 1);
          }
        }
      }
    }
    dxs.push_back(std::move(dx));
  }
  return dxs;
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : name_(std::move(name)),
      channels_(channels),
      gamma_(name_ + ".gamma", channels),
      beta_(name_ + ".beta", channels),
      running_mean_(VectorXd::Zero(channels)),
      running_var_(VectorXd::Ones(channels)) {
  gamma_.value.setOnes();
}

Tensor3 BatchNorm2d::infer(const Tensor3& x) const {
  const VectorXd inv_std =
      (running_var_.array() + kEps).sqrt().inverse().matrix();
  Tensor3 y(x.ch, x.h, x.w);
  y.data = (x.data.colwise() - running_mean_).array().colwise() *
           (inv_std.array() * gamma_.value.array());
  y.data.colwise() += beta_.value;
  return y;
}

Batch BatchNorm2d::forward(const Batch& xs) {
  double count = 0;
  VectorXd sum = VectorXd::Zero(channels_);
  for (const auto& x : xs) {
    sum += x.data.rowwise().sum();
    count += static_cast<double>(x.data.cols());
  }
  const VectorXd mean = sum / count;
  VectorXd sq_sum = VectorXd::Zero(channels_);
  for (const auto& x : xs)
    sq_sum += (x.data.colwise() - mean).array().square().matrix().rowwise().sum();
  const VectorXd var = sq_sum / count;  // biased, matching normalization
  const VectorXd inv_std = (var.array() + kEps).sqrt().inverse().matrix();

  running_mean_ = (1.0 - kMomentum) * running_mean_ + kMomentum * mean;
  running_var_ = (1.0 - kMomentum) * running_var_ + kMomentum * var;

  cached_xhat_.clear();
  cached_xhat_.reserve(xs.size());
  cached_inv_std_ = inv_std;
  cached_count_ = count;

  Batch ys;
  ys.reserve(xs.size());
  for (const auto& x : xs) {
    Tensor3 xhat(x.ch, x.h, x.w);
    xhat.data = (x.data.colwise() - mean).array().colwise() * inv_std.array();
    Tensor3 y(x.ch, x.h, x.w);
    y.data = xhat.data.array().colwise() * gamma_.value.array();
    y.data.colwise() += beta_.value;
    cached_xhat_.push_back(std::move(xhat));
    ys.push_back(std::move(y));
  }
  return ys;
}

Batch BatchNorm2d::backward(const Batch& dys) {
  VectorXd sum_dy = VectorXd::Zero(channels_);
  VectorXd sum_dy_xhat = VectorXd::Zero(channels_);
  for (std::size_t i = 0; i < dys.size(); ++i) {
    sum_dy += dys[i].data.rowwise().sum();
    sum_dy_xhat +=
        (dys[i].data.array() * cached_xhat_[i].data.array()).matrix().rowwise().sum();
  }
  gamma_.grad += sum_dy_xhat;
  beta_.grad += sum_dy;

  const VectorXd scale =
      (gamma_.value.array() * cached_inv_std_.array()).matrix();
  const VectorXd mean_dy = sum_dy / cached_count_;
  const VectorXd mean_dy_xhat = sum_dy_xhat / cached_count_;

  Batch dxs;
  dxs.reserve(dys.size());
  for (std::size_t i = 0; i < dys.size(); ++i) {
    const Tensor3& dy = dys[i];
    const Tensor3& xhat = cached_xhat_[i];
    Tensor3 dx(dy.ch, dy.h, dy.w);
    dx.data = ((dy.data.colwise() - mean_dy).array() -
               xhat.data.array().colwise() * mean_dy_xhat.array())
                  .colwise() *
              scale.array();
    dxs.push_back(std::move(dx));
  }
  return dxs;
}

// ------------------------------------------------------------------ ReLU

Tensor3 ReLU::infer(const Tensor3& x) const {
  Tensor3 y = x;
  y.data = y.data.cwiseMax(0.0);
  return y;
}

Batch ReLU::forward(const Batch& xs) {
  cached_inputs_ = xs;
  Batch ys;
  ys.reserve(xs.size());
  for (const auto& x : xs) ys.push_back(infer(x));
  return ys;
}

Batch ReLU::backward(const Batch& dys) {
  Batch dxs;
  dxs.reserve(dys.size());
  for (std::size_t i = 0; i < dys.size(); ++i) {
    Tensor3 dx = dys[i];
    dx.data = (cached_inputs_[i].data.array() > 0.0)
                  .select(dx.data, MatrixXd::Zero(dx.data.rows(), dx.data.cols()));
    dxs.push_back(std::move(dx));
  }
  return dxs;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_dim, int out_dim, Rng& rng)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      w_(name + ".weight", static_cast<Eigen::Index>(in_dim) * out_dim),
      b_(name + ".bias", out_dim) {
  const double std_dev = std::sqrt(1.0 / in_dim);
  for (Eigen::Index i = 0; i < w_.value.size(); ++i)
    w_.value[i] = std_dev * rng.gaussian();
}

MatrixXd Linear::infer(const MatrixXd& x) const {
  const Map<const MatrixXd> w(w_.value.data(), out_dim_, in_dim_);
  MatrixXd y = w * x;
  y.colwise() += b_.value;
  return y;
}

MatrixXd Linear::forward(const MatrixXd& x) {
  cached_input_ = x;
  return infer(x);
}

MatrixXd Linear::backward(const MatrixXd& dy) {
  const Map<const MatrixXd> w(w_.value.data(), out_dim_, in_dim_);
  Map<MatrixXd> wgrad(w_.grad.data(), out_dim_, in_dim_);
  wgrad.noalias() += dy * cached_input_.transpose();
  b_.grad += dy.rowwise().sum();
  return w.transpose() * dy;
}

// ------------------------------------------------------------ BasicBlock

BasicBlock::BasicBlock(const std::string& name, int in_ch, int out_ch,
                       int stride, Rng& rng)
    : projecting_(stride != 1 || in_ch != out_ch),
      conv1_(name + ".conv1", in_ch, out_ch, 3, stride, 1, rng),
      conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, rng),
      bn1_(name + ".bn1", out_ch),
      bn2_(name + ".bn2", out_ch) {
  if (projecting_) {
    sc_conv_ = std::make_unique<Conv2d>(name + ".sc_conv", in_ch, out_ch, 1,
                                        stride, 0, rng);
    sc_bn_ = std::make_unique<BatchNorm2d>(name + ".sc_bn", out_ch);
  }
}

Tensor3 BasicBlock::infer(const Tensor3& x) const {
  Tensor3 main = bn2_.infer(conv2_.infer(
      relu1_.infer(bn1_.infer(conv1_.infer(x)))));
  const Tensor3 shortcut =
      projecting_ ? sc_bn_->infer(sc_conv_->infer(x)) : x;
  main.data += shortcut.data;
  return relu2_.infer(main);
}

Batch BasicBlock::forward(const Batch& xs) {
  Batch main = bn2_.forward(conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(xs)))));
  Batch shortcut = projecting_ ? sc_bn_->forward(sc_conv_->forward(xs)) : xs;
  for (std::size_t i = 0; i < main.size(); ++i)
    main[i].data += shortcut[i].data;
  return relu2_.forward(main);
}

Batch BasicBlock::backward(const Batch& dys) {
  Batch dsum = relu2_.backward(dys);
  Batch dmain = conv1_.backward(
      bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(dsum)))));
  if (projecting_) {
    Batch dshort = sc_conv_->backward(sc_bn_->backward(dsum));
    for (std::size_t i = 0; i < dmain.size(); ++i)
      dmain[i].data += dshort[i].data;
  } else {
    for (std::size_t i = 0; i < dmain.size(); ++i)
      dmain[i].data += dsum[i].data;
  }
  return dmain;
}

void BasicBlock::collect_parameters(std::vector<Parameter*>* out) {
  out->push_back(&conv1_.weight());
  out->push_back(&bn1_.gamma());
  out->push_back(&bn1_.beta());
  out->push_back(&conv2_.weight());
  out->push_back(&bn2_.gamma());
  out->push_back(&bn2_.beta());
  if (projecting_) {
    out->push_back(&sc_conv_->weight());
    out->push_back(&sc_bn_->gamma());
    out->push_back(&sc_bn_->beta());
  }
}

void collect_bn_buffers(BatchNorm2d& bn,
                        std::vector<std::pair<std::string, Eigen::VectorXd*>>* out) {
  out->emplace_back(bn.name() + ".running_mean", &bn.running_mean());
  out->emplace_back(bn.name() + ".running_var", &bn.running_var());
}

void BasicBlock::collect_buffers(
    std::vector<std::pair<std::string, Eigen::VectorXd*>>* out) {
  collect_bn_buffers(bn1_, out);
  collect_bn_buffers(bn2_, out);
  if (projecting_) collect_bn_buffers(*sc_bn_, out);
}

}  // namespace protosv::nn
