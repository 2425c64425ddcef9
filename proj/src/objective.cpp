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

#include "protosv/objective.hpp"

#include <cmath>

#include "protosv/error.hpp"
#include "protosv/rng.hpp"

namespace protosv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Guard added to prototype norms so a zero prototype cannot divide by zero
// and its gradient stays finite.
constexpr double kNormEps = 1e-8;

// Softmax cross-entropy over rows of `logits` with 1-based labels; returns
// the mean loss and writes d(loss)/d(logits) into *dlogits (same shape).
double softmax_xent(const MatrixXd& logits, const std::vector<int>& labels,
                    MatrixXd* dlogits) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError("label count does not match sample count");
  double loss = 0.0;
  if (dlogits) dlogits->resize(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 1 || label > static_cast<int>(c))
      throw DataError("label " + std::to_string(label) +
                      " outside 1.." + std::to_string(c));
    const double mx = logits.row(i).maxCoeff();
    const VectorXd ex = (logits.row(i).array() - mx).exp();
    const double denom = ex.sum();
    loss += -(logits(i, label - 1) - mx - std::log(denom));
    if (dlogits) {
      dlogits->row(i) = (ex / denom).transpose() / static_cast<double>(n);
      (*dlogits)(i, label - 1) -= 1.0 / static_cast<double>(n);
    }
  }
  return loss / static_cast<double>(n);
}

// Scaled-cosine logits of each embedding row against each prototype row.
MatrixXd cosine_logits(const MatrixXd& embs, const MatrixXd& protos) {
  const VectorXd norms =
      protos.rowwise().norm().array() + kNormEps;
  return (embs * protos.transpose()).array().rowwise() /
         norms.transpose().array();
}

// Backprop through cosine_logits: given dL/dlogits, accumulates dL/dembs and
// dL/dprotos. z_ic = e_i . p_c / (||p_c|| + eps), so
//   dz/de_i = p_c / (||p_c|| + eps)
//   dz/dp_c = e_i / (||p_c|| + eps) - z_ic * unit(p_c) / (||p_c|| + eps)
void cosine_logits_backward(const MatrixXd& embs, const MatrixXd& protos,
                            const MatrixXd& dlogits, MatrixXd* d_embs,
                            MatrixXd* d_protos) {
  const VectorXd raw_norms = protos.rowwise().norm();
  const VectorXd norms = raw_norms.array() + kNormEps;
  const MatrixXd protos_over_norm =
      protos.array().colwise() / norms.array();  // row c = p_c/(n_c+eps)
  if (d_embs) d_embs->noalias() = dlogits * protos_over_norm;
  if (d_protos) {
    // First term: sum_i dz_ic * e_i / (n_c + eps)
    MatrixXd term1 = dlogits.transpose() * embs;
    term1.array().colwise() /= norms.array();
    // Second term: -(sum_i dz_ic * z_ic) * p_c / (n_c (n_c + eps))
    const MatrixXd logits = cosine_logits(embs, protos);
    const VectorXd coeff =
        (dlogits.array() * logits.array()).colwise().sum().transpose();
    MatrixXd term2 = protos;
    for (Eigen::Index c = 0; c < protos.rows(); ++c) {
      const double n = raw_norms[c];
      const double scale = n > 0.0 ? coeff[c] / (n * norms[c]) : 0.0;
      term2.row(c) *= scale;
    }
    d_protos->noalias() = term1 - term2;
  }
}

}  // namespace

std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::vanilla: return "vanilla";
    case TrainMode::meta: return "meta";
    case TrainMode::meta_global: return "meta_global";
  }
  return "?";
}

TrainMode mode_from_name(const std::string& name) {
  if (name == "vanilla") return TrainMode::vanilla;
  if (name == "meta") return TrainMode::meta;
  if (name == "meta_global") return TrainMode::meta_global;
  throw ConfigError("unknown mode '" + name +
                    "' (expected vanilla, meta or meta_global)");
}

void LossConfig::validate() const {
  if (lambda < 0) throw ConfigError("lambda must be >= 0");
}

Prototypes compute_prototypes(const MatrixXd& support_embs,
                              const std::vector<int>& local_labels,
                              int n_way) {
  if (static_cast<Eigen::Index>(local_labels.size()) != support_embs.rows())
    throw DataError("label count does not match support count");
  Prototypes p;
  p.matrix = MatrixXd::Zero(n_way, support_embs.cols());
  std::vector<int> counts(static_cast<std::size_t>(n_way), 0);
  for (Eigen::Index i = 0; i < support_embs.rows(); ++i) {
    const int label = local_labels[static_cast<std::size_t>(i)];
    if (label < 1 || label > n_way)
      throw DataError("local label " + std::to_string(label) +
                      " outside 1.." + std::to_string(n_way));
    p.matrix.row(label - 1) += support_embs.row(i);
    ++counts[static_cast<std::size_t>(label - 1)];
  }
  for (int c = 0; c < n_way; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw DataError("no support examples for local label " +
                      std::to_string(c + 1));
    p.matrix.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return p;
}

double scaled_cosine(const VectorXd& x, const VectorXd& p) {
  return x.dot(p) / (p.norm() + kNormEps);
}

double episode_loss(const MatrixXd& query_embs,
                    const std::vector<int>& local_labels,
                    const Prototypes& protos) {
  return softmax_xent(cosine_logits(query_embs, protos.matrix), local_labels,
                      nullptr);
}

double global_loss(const MatrixXd& embs, const std::vector<int>& global_labels,
                   const MatrixXd& omega) {
  return softmax_xent(cosine_logits(embs, omega), global_labels, nullptr);
}

LossGrads combined_loss(const EpisodeBatch& batch, const MatrixXd& omega,
                        const LossConfig& cfg) {
  cfg.validate();
  if (cfg.mode == TrainMode::vanilla)
    throw ConfigError("combined_loss: vanilla mode takes a flat batch, use vanilla_loss");
  const Eigen::Index dim = batch.support_embs.cols();
  LossGrads out;
  out.d_support = MatrixXd::Zero(batch.support_embs.rows(), dim);
  out.d_query = MatrixXd::Zero(batch.query_embs.rows(), dim);
  out.d_omega = MatrixXd::Zero(omega.rows(), omega.cols());

  // Episode term (prototypes from supports, scored by queries).
  const Prototypes protos =
      compute_prototypes(batch.support_embs, batch.support_local, batch.n_way);
  const MatrixXd elogits = cosine_logits(batch.query_embs, protos.matrix);
  MatrixXd dlogits;
  out.value.episode_term = softmax_xent(elogits, batch.query_local, &dlogits);
  MatrixXd d_protos;
  cosine_logits_backward(batch.query_embs, protos.matrix, dlogits,
                         &out.d_query, &d_protos);
  // Prototype row c is a mean over that class's supports.
  std::vector<int> counts(static_cast<std::size_t>(batch.n_way), 0);
  for (int label : batch.support_local)
    ++counts[static_cast<std::size_t>(label - 1)];
  for (Eigen::Index i = 0; i < batch.support_embs.rows(); ++i) {
    const int c = batch.support_local[static_cast<std::size_t>(i)] - 1;
    out.d_support.row(i) +=
        d_protos.row(c) / counts[static_cast<std::size_t>(c)];
  }

  // Global term over S u Q.
  if (cfg.mode == TrainMode::meta_global) {
    MatrixXd all(batch.support_embs.rows() + batch.query_embs.rows(), dim);
    all << batch.support_embs, batch.query_embs;
    std::vector<int> labels = batch.support_global;
    labels.insert(labels.end(), batch.query_global.begin(),
                  batch.query_global.end());
    const MatrixXd glogits = cosine_logits(all, omega);
    MatrixXd dglogits;
    out.value.global_term = softmax_xent(glogits, labels, &dglogits);
    MatrixXd d_all;
    cosine_logits_backward(all, omega, dglogits, &d_all, &out.d_omega);
    out.d_omega *= cfg.lambda;
    out.d_support += cfg.lambda * d_all.topRows(batch.support_embs.rows());
    out.d_query += cfg.lambda * d_all.bottomRows(batch.query_embs.rows());
  }

  out.value.total = out.value.episode_term + cfg.lambda * out.value.global_term;
  return out;
}

LossGrads vanilla_loss(const MatrixXd& batch_embs,
                       const std::vector<int>& global_labels,
                       const MatrixXd& omega, const LossConfig& cfg) {
  cfg.validate();
  LossGrads out;
  const MatrixXd logits = cosine_logits(batch_embs, omega);
  MatrixXd dlogits;
  out.value.global_term = softmax_xent(logits, global_labels, &dlogits);
  out.value.episode_term = 0.0;
  out.value.total = out.value.global_term;
  cosine_logits_backward(batch_embs, omega, dlogits, &out.d_query,
                         &out.d_omega);
  return out;
}

MatrixXd init_global_prototypes(int num_classes, int dim, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd omega(num_classes, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int c = 0; c < num_classes; ++c)
    for (int d = 0; d < dim; ++d) omega(c, d) = scale * rng.gaussian();
  return omega;
}

}  // namespace protosv
