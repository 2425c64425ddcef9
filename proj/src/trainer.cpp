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

#include "protosv/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "protosv/error.hpp"
#include "protosv/evaluator.hpp"

namespace protosv {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr int kMaxDecays = 2;  // third plateau stops instead of decaying
}  // namespace

void TrainConfig::validate() const {
  if (optimizer != "sgd_nesterov")
    throw ConfigError("unknown optimizer '" + optimizer + "'");
  if (lr_init <= 0) throw ConfigError("lr_init must be > 0");
  if (momentum < 0 || momentum >= 1)
    throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (lr_decay_factor <= 1) throw ConfigError("lr_decay_factor must be > 1");
  if (lr_decay_rule != "plateau")
    throw ConfigError("unknown lr_decay_rule '" + lr_decay_rule + "'");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (val_episodes < 1) throw ConfigError("val_episodes must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (vanilla_seconds <= 0) throw ConfigError("vanilla_seconds must be > 0");
  if (encoder.n_mels != features.n_mels)
    throw ConfigError("encoder n_mels does not match feature n_mels");
  features.validate();
  encoder.validate();
  episode.validate();
  loss.validate();
}

void SgdNesterov::step(const std::vector<nn::Parameter*>& params, double lr) {
  if (buf_.empty()) {
    buf_.reserve(params.size());
    for (const auto* p : params)
      buf_.push_back(VectorXd::Zero(p->value.size()));
  }
  if (buf_.size() != params.size())
    throw ConfigError("optimizer buffer count does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = *params[i];
    const VectorXd g = p.grad + weight_decay_ * p.value;
    buf_[i] = momentum_ * buf_[i] + g;
    p.value -= lr * (g + momentum_ * buf_[i]);
  }
}

namespace {

Encoder make_encoder(const TrainConfig& cfg) {
  cfg.validate();
  Rng init_rng = Rng(cfg.seed).split("init");
  return Encoder(cfg.encoder, init_rng);
}

}  // namespace

TrainState::TrainState(const TrainConfig& config, const Manifest& train_manifest)
    : cfg(config),
      encoder(make_encoder(config)),
      omega("omega", 1),
      opt(config.momentum, config.weight_decay),
      rng(Rng(config.seed).split("sample")),
      lr(config.lr_init) {
  class_speakers = train_manifest.speaker_ids();
  const int c_prime = static_cast<int>(class_speakers.size());
  if (c_prime < 1) throw DataError("training manifest has no speakers");
  const int dim = cfg.encoder.embedding_dim;
  const MatrixXd init = init_global_prototypes(
      c_prime, dim, Rng(config.seed).split("omega").base_seed());
  omega.value.resize(static_cast<Eigen::Index>(c_prime) * dim);
  Map<MatrixXd>(omega.value.data(), c_prime, dim) = init;
  omega.grad = VectorXd::Zero(omega.value.size());
}

Map<MatrixXd> TrainState::omega_matrix() {
  const auto c_prime = static_cast<Eigen::Index>(class_speakers.size());
  return Map<MatrixXd>(omega.value.data(), c_prime,
                       cfg.encoder.embedding_dim);
}

std::vector<nn::Parameter*> TrainState::all_parameters() {
  auto params = encoder.parameters();
  params.push_back(&omega);
  return params;
}

namespace {

void check_finite(const TrainState& st, const LossBreakdown& bd) {
  if (std::isfinite(bd.total)) return;
  char msg[160];
  std::snprintf(msg, sizeof(msg),
                "non-finite loss at step %lld (lr=%g, episode_term=%g, "
                "global_term=%g)",
                static_cast<long long>(st.step + 1), st.lr, bd.episode_term,
                bd.global_term);
  throw NumericError(msg);
}

}  // namespace

LossBreakdown train_step(TrainState& st, const Episode& ep,
                         const LossConfig& lcfg) {
  if (lcfg.mode == TrainMode::vanilla)
    throw ConfigError("vanilla mode trains on flat batches, not episodes");
  st.encoder.zero_grad();
  st.omega.grad.setZero();

  std::vector<const FeatureMatrix*> ptrs;
  ptrs.reserve(ep.support.size() + ep.query.size());
  EpisodeBatch batch;
  batch.n_way = 0;
  for (const auto& item : ep.support) {
    ptrs.push_back(&item.features);
    batch.support_local.push_back(item.local_label);
    batch.support_global.push_back(item.global_class_id);
    batch.n_way = std::max(batch.n_way, item.local_label);
  }
  for (const auto& item : ep.query) {
    ptrs.push_back(&item.features);
    batch.query_local.push_back(item.local_label);
    batch.query_global.push_back(item.global_class_id);
  }

  const MatrixXd embs = st.encoder.forward_train(ptrs);
  const auto n_support = static_cast<Eigen::Index>(ep.support.size());
  batch.support_embs = embs.topRows(n_support);
  batch.query_embs = embs.bottomRows(embs.rows() - n_support);

  const MatrixXd omega = st.omega_matrix();
  const LossGrads lg = combined_loss(batch, omega, lcfg);
  check_finite(st, lg.value);

  MatrixXd d_embs(embs.rows(), embs.cols());
  d_embs.topRows(n_support) = lg.d_support;
  d_embs.bottomRows(embs.rows() - n_support) = lg.d_query;
  st.encoder.backward(d_embs);
  Map<MatrixXd>(st.omega.grad.data(), omega.rows(), omega.cols()) += lg.d_omega;

  st.opt.step(st.all_parameters(), st.lr);
  ++st.step;
  return lg.value;
}

LossBreakdown train_step(TrainState& st, const std::vector<EpisodeItem>& batch,
                         const LossConfig& lcfg) {
  if (lcfg.mode != TrainMode::vanilla)
    throw ConfigError("episodic modes train on episodes, not flat batches");
  st.encoder.zero_grad();
  st.omega.grad.setZero();

  std::vector<const FeatureMatrix*> ptrs;
  std::vector<int> labels;
  ptrs.reserve(batch.size());
  for (const auto& item : batch) {
    ptrs.push_back(&item.features);
    labels.push_back(item.global_class_id);
  }
  const MatrixXd embs = st.encoder.forward_train(ptrs);
  const MatrixXd omega = st.omega_matrix();
  const LossGrads lg = vanilla_loss(embs, labels, omega, lcfg);
  check_finite(st, lg.value);

  st.encoder.backward(lg.d_query);
  Map<MatrixXd>(st.omega.grad.data(), omega.rows(), omega.cols()) += lg.d_omega;

  st.opt.step(st.all_parameters(), st.lr);
  ++st.step;
  return lg.value;
}

// --------------------------------------------------------------------- fit

FitResult fit(const Manifest& train_manifest, const Manifest& val_manifest,
              const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const bool episodic = cfg.mode != TrainMode::vanilla;
  if (episodic &&
      train_manifest.num_speakers() < static_cast<std::size_t>(cfg.episode.n_way))
    throw DataError("training manifest has " +
                    std::to_string(train_manifest.num_speakers()) +
                    " speakers, episode config needs " +
                    std::to_string(cfg.episode.n_way));
  if (val_manifest.num_speakers() < 2)
    throw DataError("validation manifest needs at least 2 speakers");
  for (const auto& spk : train_manifest.speaker_ids())
    for (const auto& vspk : val_manifest.speaker_ids())
      if (spk == vspk)
        throw DataError("train and validation speakers overlap: " + spk);

  std::filesystem::create_directories(out_dir);
  FeatureStore train_store(train_manifest, cfg.features);
  FeatureStore val_store(val_manifest, cfg.features);
  const auto class_map = train_manifest.class_map();

  TrainState st(cfg, train_manifest);
  LossConfig lcfg = cfg.loss;
  lcfg.mode = cfg.mode;

  IdentificationProtocol val_proto;
  val_proto.n_way =
      std::min<int>(10, static_cast<int>(val_manifest.num_speakers()));
  val_proto.episodes = cfg.val_episodes;
  val_proto.enroll_seconds = cfg.episode.support_seconds;
  val_proto.test_per_spk = 1;
  val_proto.query_seconds = cfg.episode.query_seconds_min;

  const auto metrics_path = out_dir / "metrics.csv";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics)
    throw DataError("cannot create metrics log: " + metrics_path.string());
  metrics << "step,lr,episode_loss,global_loss,val_acc\n";

  FitResult result;
  result.metrics_csv = metrics_path;
  result.best_val_accuracy = -1.0;

  bool stop = false;
  char row[256];
  while (st.step < cfg.max_steps && !stop) {
    const double step_lr = st.lr;
    LossBreakdown bd;
    if (episodic) {
      const Episode ep = sample_episode(train_manifest, train_store.source(),
                                        cfg.episode, cfg.features, class_map,
                                        st.rng);
      bd = train_step(st, ep, lcfg);
    } else {
      const auto batch = sample_vanilla_batch(
          train_manifest, train_store.source(), cfg.batch_size,
          cfg.vanilla_seconds, cfg.features, class_map, st.rng);
      bd = train_step(st, batch, lcfg);
    }

    std::string val_col;
    if (st.step % cfg.eval_interval == 0) {
      Rng val_rng = Rng(cfg.seed).split("val", static_cast<std::uint64_t>(st.step));
      const IdentificationReport rep = evaluate_identification(
          val_manifest, val_store.source(), st.encoder, cfg.features,
          val_proto, val_rng);
      std::snprintf(row, sizeof(row), "%.9g", rep.mean_accuracy);
      val_col = row;
      if (rep.mean_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = rep.mean_accuracy;
        st.best_val = rep.mean_accuracy;
        st.bad_evals = 0;
        result.best_checkpoint = out_dir / "ckpt_best.bin";
        save_checkpoint(result.best_checkpoint, st);
      } else {
        ++st.bad_evals;
        if (st.bad_evals >= cfg.plateau_patience) {
          if (st.decays < kMaxDecays) {
            st.lr /= cfg.lr_decay_factor;
            ++st.decays;
            st.bad_evals = 0;
          } else {
            stop = true;
          }
        }
      }
    }

    std::snprintf(row, sizeof(row), "%lld,%.9g,%.9g,%.9g,",
                  static_cast<long long>(st.step), step_lr, bd.episode_term,
                  bd.global_term);
    metrics << row << val_col << '\n';

    if (st.step % cfg.checkpoint_every == 0)
      save_checkpoint(out_dir / ("ckpt_step" + std::to_string(st.step) + ".bin"),
                      st);
  }
  metrics.flush();

  result.steps_run = st.step;
  result.final_checkpoint =
      out_dir / ("ckpt_step" + std::to_string(st.step) + ".bin");
  save_checkpoint(result.final_checkpoint, st);
  if (result.best_checkpoint.empty()) result.best_checkpoint = result.final_checkpoint;
  return result;
}

// -------------------------------------------------------------- checkpoint

namespace {

struct Writer {
  std::ofstream out;
  explicit Writer(const std::filesystem::path& p)
      : out(p, std::ios::binary | std::ios::trunc) {
    if (!out) throw DataError("cannot create checkpoint: " + p.string());
  }
  void u32(std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
  void u64(std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
  void f64(double v) { out.write(reinterpret_cast<const char*>(&v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(const VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double)) * v.size());
  }
};

struct Reader {
  std::ifstream in;
  std::filesystem::path path;
  explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("cannot open checkpoint: " + p.string());
  }
  void fail() { throw DataError("truncated checkpoint: " + path.string()); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) fail();
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 8)) fail();
    return v;
  }
  double f64() {
    double v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 8)) fail();
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) fail();
    return s;
  }
  VectorXd vec() {
    const std::uint64_t n = u64();
    VectorXd v(static_cast<Eigen::Index>(n));
    if (n && !in.read(reinterpret_cast<char*>(v.data()),
                      static_cast<std::streamsize>(sizeof(double) * n)))
      fail();
    return v;
  }
};

void write_encoder_cfg(Writer& w, const EncoderConfig& cfg) {
  w.str(arch_name(cfg.arch));
  w.u32(static_cast<std::uint32_t>(cfg.channel_widths.size()));
  for (int width : cfg.channel_widths) w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(cfg.embedding_dim));
  w.u32(static_cast<std::uint32_t>(cfg.n_mels));
}

EncoderConfig read_encoder_cfg(Reader& r) {
  EncoderConfig cfg;
  cfg.arch = arch_from_name(r.str());
  cfg.channel_widths.resize(r.u32());
  for (auto& width : cfg.channel_widths) width = static_cast<int>(r.u32());
  cfg.embedding_dim = static_cast<int>(r.u32());
  cfg.n_mels = static_cast<int>(r.u32());
  return cfg;
}

void write_feature_cfg(Writer& w, const FeatureConfig& cfg) {
  w.u32(static_cast<std::uint32_t>(cfg.n_mels));
  w.f64(cfg.win_ms);
  w.f64(cfg.hop_ms);
  w.u32(static_cast<std::uint32_t>(cfg.sample_rate));
  w.f64(cfg.log_floor);
  w.u32(static_cast<std::uint32_t>(cfg.fft_size));
  w.f64(cfg.fmin_hz);
  w.f64(cfg.fmax_hz);
  w.u32((cfg.pre_emphasis ? 1u : 0u) | (cfg.dither ? 2u : 0u));
}

FeatureConfig read_feature_cfg(Reader& r) {
  FeatureConfig cfg;
  cfg.n_mels = static_cast<int>(r.u32());
  cfg.win_ms = r.f64();
  cfg.hop_ms = r.f64();
  cfg.sample_rate = static_cast<int>(r.u32());
  cfg.log_floor = r.f64();
  cfg.fft_size = static_cast<int>(r.u32());
  cfg.fmin_hz = r.f64();
  cfg.fmax_hz = r.f64();
  const std::uint32_t flags = r.u32();
  cfg.pre_emphasis = flags & 1u;
  cfg.dither = flags & 2u;
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, TrainState& st) {
  Writer w(path);
  w.out.write("PSVC", 4);
  w.u32(kCheckpointVersion);
  write_encoder_cfg(w, st.cfg.encoder);
  write_feature_cfg(w, st.cfg.features);
  w.u64(static_cast<std::uint64_t>(st.step));
  w.f64(st.lr);
  w.u32(static_cast<std::uint32_t>(st.class_speakers.size()));
  for (const auto& spk : st.class_speakers) w.str(spk);
  w.vec(st.omega.value);

  const auto params = st.encoder.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name);
    w.vec(p->value);
  }
  const auto bufs = st.encoder.buffers();
  w.u32(static_cast<std::uint32_t>(bufs.size()));
  for (const auto& [name, vec] : bufs) {
    w.str(name);
    w.vec(*vec);
  }
  auto& opt_bufs = st.opt.buffers();
  w.u32(static_cast<std::uint32_t>(opt_bufs.size()));
  for (const auto& b : opt_bufs) w.vec(b);

  for (std::uint64_t v : st.rng.serialize()) w.u64(v);
  w.f64(st.best_val);
  w.u32(static_cast<std::uint32_t>(st.bad_evals));
  w.u32(static_cast<std::uint32_t>(st.decays));
  if (!w.out) throw DataError("failed writing checkpoint: " + path.string());
}

namespace {

void load_common(Reader& r, const std::filesystem::path& path,
                 EncoderConfig* enc_cfg, FeatureConfig* feat_cfg,
                 std::int64_t* step, double* lr,
                 std::vector<std::string>* speakers, VectorXd* omega) {
  char magic[4];
  if (!r.in.read(magic, 4) || std::memcmp(magic, "PSVC", 4) != 0)
    throw DataError("bad checkpoint magic: " + path.string());
  if (r.u32() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version: " + path.string());
  *enc_cfg = read_encoder_cfg(r);
  *feat_cfg = read_feature_cfg(r);
  *step = static_cast<std::int64_t>(r.u64());
  *lr = r.f64();
  speakers->resize(r.u32());
  for (auto& spk : *speakers) spk = r.str();
  *omega = r.vec();
}

}  // namespace

void load_checkpoint(const std::filesystem::path& path, TrainState& st) {
  Reader r(path);
  EncoderConfig enc_cfg;
  FeatureConfig feat_cfg;
  std::vector<std::string> speakers;
  VectorXd omega;
  load_common(r, path, &enc_cfg, &feat_cfg, &st.step, &st.lr, &speakers, &omega);
  if (arch_name(enc_cfg.arch) != arch_name(st.cfg.encoder.arch) ||
      enc_cfg.channel_widths != st.cfg.encoder.channel_widths ||
      enc_cfg.embedding_dim != st.cfg.encoder.embedding_dim ||
      enc_cfg.n_mels != st.cfg.encoder.n_mels)
    throw ConfigError("checkpoint encoder config mismatch: " + path.string());
  if (speakers != st.class_speakers)
    throw ConfigError("checkpoint speaker set mismatch: " + path.string());
  if (omega.size() != st.omega.value.size())
    throw ConfigError("checkpoint omega shape mismatch: " + path.string());
  st.omega.value = omega;

  const auto params = st.encoder.parameters();
  if (r.u32() != params.size())
    throw ConfigError("checkpoint parameter count mismatch: " + path.string());
  for (auto* p : params) {
    const std::string name = r.str();
    const VectorXd v = r.vec();
    if (name != p->name || v.size() != p->value.size())
      throw ConfigError("checkpoint parameter mismatch at " + name);
    p->value = v;
  }
  const auto bufs = st.encoder.buffers();
  if (r.u32() != bufs.size())
    throw ConfigError("checkpoint buffer count mismatch: " + path.string());
  for (auto& [name, vec] : bufs) {
    const std::string got = r.str();
    const VectorXd v = r.vec();
    if (got != name || v.size() != vec->size())
      throw ConfigError("checkpoint buffer mismatch at " + got);
    *vec = v;
  }
  auto& opt_bufs = st.opt.buffers();
  opt_bufs.resize(r.u32());
  for (auto& b : opt_bufs) b = r.vec();

  std::array<std::uint64_t, 5> rng_state{};
  for (auto& v : rng_state) v = r.u64();
  st.rng.deserialize(rng_state);
  st.best_val = r.f64();
  st.bad_evals = static_cast<int>(r.u32());
  st.decays = static_cast<int>(r.u32());
}

LoadedModel load_model(const std::filesystem::path& path) {
  Reader r(path);
  LoadedModel model;
  std::int64_t step = 0;
  double lr = 0.0;
  VectorXd omega;
  load_common(r, path, &model.encoder_cfg, &model.feature_cfg, &step, &lr,
              &model.class_speakers, &omega);
  model.step = step;

  Rng dummy(0);
  model.encoder = std::make_unique<Encoder>(model.encoder_cfg, dummy);
  const auto c_prime = static_cast<Eigen::Index>(model.class_speakers.size());
  if (c_prime > 0 && omega.size() == c_prime * model.encoder_cfg.embedding_dim)
    model.omega = Map<MatrixXd>(omega.data(), c_prime,
                                model.encoder_cfg.embedding_dim);

  const auto params = model.encoder->parameters();
  if (r.u32() != params.size())
    throw ConfigError("checkpoint parameter count mismatch: " + path.string());
  for (auto* p : params) {
    const std::string name = r.str();
    const VectorXd v = r.vec();
    if (name != p->name || v.size() != p->value.size())
      throw ConfigError("checkpoint parameter mismatch at " + name);
    p->value = v;
  }
  const auto bufs = model.encoder->buffers();
  if (r.u32() != bufs.size())
    throw ConfigError("checkpoint buffer count mismatch: " + path.string());
  for (auto& [name, vec] : bufs) {
    const std::string got = r.str();
    const VectorXd v = r.vec();
    if (got != name || v.size() != vec->size())
      throw ConfigError("checkpoint buffer mismatch at " + got);
    *vec = v;
  }
  return model;
}

}  // namespace protosv
