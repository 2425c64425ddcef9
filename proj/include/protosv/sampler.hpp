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

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "protosv/features.hpp"
#include "protosv/manifest.hpp"
#include "protosv/rng.hpp"

namespace protosv {

struct EpisodeConfig {
  int n_way = 100;
  int k_shot = 1;
  int m_query = 2;
  double support_seconds = 2.0;
  double query_seconds_min = 1.0;
  double query_seconds_max = 2.0;

  void validate() const;
};

struct EpisodeItem {
  FeatureMatrix features;
  int local_label = 0;      // 1..n_way
  int global_class_id = 0;  // 1..C'
  std::string utt_id;
};

struct Episode {
  std::vector<EpisodeItem> support;  // n_way * k_shot items
  std::vector<EpisodeItem> query;    // n_way * m_query items
};

// Full-length normalized features per utterance; anything injectable here
// works for the samplers (tests use synthetic matrices).
using FeatureSource = std::function<const FeatureMatrix&(const std::string&)>;

// Lazily featurizes manifest utterances; optionally persists each matrix in
// cache_dir (one file per utterance, bit-exact container).
class FeatureStore {
 public:
  FeatureStore(const Manifest& manifest, const FeatureConfig& cfg,
               std::optional<std::filesystem::path> cache_dir = std::nullopt);

  const FeatureMatrix& get(const std::string& utt_id);
  void precompute_all();
  FeatureSource source() {
    return [this](const std::string& id) -> const FeatureMatrix& {
      return get(id);
    };
  }
  const FeatureConfig& config() const { return cfg_; }

 private:
  const Manifest& manifest_;
  FeatureConfig cfg_;
  std::optional<std::filesystem::path> cache_dir_;
  std::map<std::string, FeatureMatrix> loaded_;
};

// Draws one task: n_way distinct speakers, k_shot supports cropped to
// support_seconds, m_query queries with per-query lengths uniform over the
// integer frame range for [query_seconds_min, query_seconds_max]. Utterances
// are drawn without replacement per speaker when possible, with replacement
// otherwise. class_map supplies the 1..C' global id per speaker.
Episode sample_episode(const Manifest& m, const FeatureSource& features,
                       const EpisodeConfig& cfg, const FeatureConfig& fcfg,
                       const std::map<std::string, int>& class_map, Rng& rng);

// Uniform speaker-then-utterance draws, each segment exactly fixed_seconds.
std::vector<EpisodeItem> sample_vanilla_batch(
    const Manifest& m, const FeatureSource& features, int batch_size,
    double fixed_seconds, const FeatureConfig& fcfg,
    const std::map<std::string, int>& class_map, Rng& rng);

// First `count` entries of a partial Fisher-Yates shuffle over [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                        Rng& rng);

// k draws from a speaker's utterance list: distinct when the speaker has at
// least k utterances, independent uniform draws (with replacement) otherwise.
std::vector<std::string> draw_utterances(const std::vector<std::string>& utts,
                                         std::size_t k, Rng& rng);

}  // namespace protosv
