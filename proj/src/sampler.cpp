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

#include "protosv/sampler.hpp"

#include <algorithm>

#include "protosv/error.hpp"
#include "protosv/wav.hpp"

namespace protosv {

void EpisodeConfig::validate() const {
  if (n_way < 2) throw ConfigError("n_way must be >= 2");
  if (k_shot < 1 || m_query < 1)
    throw ConfigError("k_shot and m_query must be >= 1");
  if (!(query_seconds_min > 0) || query_seconds_min > query_seconds_max ||
      query_seconds_max > support_seconds)
    throw ConfigError(
        "need 0 < query_seconds_min <= query_seconds_max <= support_seconds");
}

FeatureStore::FeatureStore(const Manifest& manifest, const FeatureConfig& cfg,
                           std::optional<std::filesystem::path> cache_dir)
    : manifest_(manifest), cfg_(cfg), cache_dir_(std::move(cache_dir)) {
  if (cache_dir_) std::filesystem::create_directories(*cache_dir_);
}

const FeatureMatrix& FeatureStore::get(const std::string& utt_id) {
  auto it = loaded_.find(utt_id);
  if (it != loaded_.end()) return it->second;

  const UtteranceRecord& rec = manifest_.record(utt_id);
  std::filesystem::path cache_path;
  if (cache_dir_) {
    std::string name = utt_id;
    std::replace(name.begin(), name.end(), '/', '-');
    cache_path = *cache_dir_ / (name + ".feat");
    if (std::filesystem::exists(cache_path)) {
      auto [pos, ok] =
          loaded_.emplace(utt_id, load_feature_cache(cache_path, cfg_));
      return pos->second;
    }
  }
  Waveform w;
  try {
    w = read_wav(rec.path);
  } catch (const DataError& e) {
    throw DataError("cannot featurize " + utt_id + ": " + e.what());
  }
  FeatureMatrix f = compute_logmel(w, cfg_);
  if (cache_dir_) save_feature_cache(cache_path, f, cfg_);
  auto [pos, ok] = loaded_.emplace(utt_id, std::move(f));
  return pos->second;
}

void FeatureStore::precompute_all() {
  for (const auto& rec : manifest_.records()) get(rec.utt_id);
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                        Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i),
                        static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

std::vector<std::string> draw_utterances(const std::vector<std::string>& utts,
                                         std::size_t k, Rng& rng) {
  std::vector<std::string> out;
  out.reserve(k);
  if (utts.size() >= k) {
    for (std::size_t i : sample_indices(utts.size(), k, rng))
      out.push_back(utts[i]);
  } else {
    for (std::size_t i = 0; i < k; ++i)
      out.push_back(utts[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(utts.size() - 1)))]);
  }
  return out;
}

namespace {

int global_id(const std::map<std::string, int>& class_map,
              const std::string& speaker) {
  auto it = class_map.find(speaker);
  if (it == class_map.end())
    throw DataError("speaker not in class map: " + speaker);
  return it->second;
}

}  // namespace

Episode sample_episode(const Manifest& m, const FeatureSource& features,
                       const EpisodeConfig& cfg, const FeatureConfig& fcfg,
                       const std::map<std::string, int>& class_map, Rng& rng) {
  cfg.validate();
  const auto speakers = m.speaker_ids();
  if (speakers.size() < static_cast<std::size_t>(cfg.n_way))
    throw DataError("episode needs " + std::to_string(cfg.n_way) +
                    " speakers but manifest has " +
                    std::to_string(speakers.size()));

  const int support_frames = frames_for_seconds(cfg.support_seconds, fcfg);
  const int min_frames = frames_for_seconds(cfg.query_seconds_min, fcfg);
  const int max_frames = frames_for_seconds(cfg.query_seconds_max, fcfg);

  Episode ep;
  ep.support.reserve(static_cast<std::size_t>(cfg.n_way) * cfg.k_shot);
  ep.query.reserve(static_cast<std::size_t>(cfg.n_way) * cfg.m_query);

  const auto chosen =
      sample_indices(speakers.size(), static_cast<std::size_t>(cfg.n_way), rng);
  for (int c = 0; c < cfg.n_way; ++c) {
    const std::string& spk = speakers[chosen[static_cast<std::size_t>(c)]];
    const auto& utts = m.speakers().at(spk);
    const auto draws = draw_utterances(
        utts, static_cast<std::size_t>(cfg.k_shot + cfg.m_query), rng);
    const int gid = global_id(class_map, spk);
    for (int k = 0; k < cfg.k_shot; ++k) {
      EpisodeItem item;
      item.utt_id = draws[static_cast<std::size_t>(k)];
      item.local_label = c + 1;
      item.global_class_id = gid;
      item.features =
          crop_or_duplicate(features(item.utt_id), support_frames, rng);
      ep.support.push_back(std::move(item));
    }
    for (int q = 0; q < cfg.m_query; ++q) {
      EpisodeItem item;
      item.utt_id = draws[static_cast<std::size_t>(cfg.k_shot + q)];
      item.local_label = c + 1;
      item.global_class_id = gid;
      const int len = static_cast<int>(rng.uniform_int(min_frames, max_frames));
      item.features = crop_or_duplicate(features(item.utt_id), len, rng);
      ep.query.push_back(std::move(item));
    }
  }
  return ep;
}

std::vector<EpisodeItem> sample_vanilla_batch(
    const Manifest& m, const FeatureSource& features, int batch_size,
    double fixed_seconds, const FeatureConfig& fcfg,
    const std::map<std::string, int>& class_map, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const auto speakers = m.speaker_ids();
  if (speakers.empty()) throw DataError("manifest has no speakers");
  const int frames = frames_for_seconds(fixed_seconds, fcfg);

  std::vector<EpisodeItem> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const auto& spk = speakers[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(speakers.size() - 1)))];
    const auto& utts = m.speakers().at(spk);
    EpisodeItem item;
    item.utt_id = utts[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(utts.size() - 1)))];
    item.local_label = 0;
    item.global_class_id = global_id(class_map, spk);
    item.features = crop_or_duplicate(features(item.utt_id), frames, rng);
    batch.push_back(std::move(item));
  }
  return batch;
}

}  // namespace protosv
