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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace protosv {

struct UtteranceRecord {
  std::string utt_id;      // unique within a manifest
  std::string speaker_id;  // top-level directory name
  std::filesystem::path path;
  std::uint32_t num_samples = 0;
  int sample_rate = 0;

  bool operator==(const UtteranceRecord&) const = default;
};

// Immutable after construction; speaker map keys are sorted so every
// iteration order is deterministic.
class Manifest {
 public:
  Manifest() = default;
  static Manifest from_records(std::vector<UtteranceRecord> records);

  const std::vector<UtteranceRecord>& records() const { return records_; }
  const std::map<std::string, std::vector<std::string>>& speakers() const {
    return speakers_;
  }
  std::vector<std::string> speaker_ids() const;
  const UtteranceRecord& record(const std::string& utt_id) const;
  bool has(const std::string& utt_id) const {
    return by_id_.count(utt_id) != 0;
  }
  std::size_t size() const { return records_.size(); }
  std::size_t num_speakers() const { return speakers_.size(); }

  // Global class ids 1..C' assigned in sorted speaker order.
  std::map<std::string, int> class_map() const;

 private:
  std::vector<UtteranceRecord> records_;
  std::map<std::string, std::vector<std::string>> speakers_;
  std::map<std::string, std::size_t> by_id_;
};

struct ScanResult {
  Manifest manifest;
  int skipped = 0;  // unreadable or non-wav files
};

// Walks root expecting speaker_dir/.../utterance.wav. utt_id is the relative
// path with separators replaced by '-'. Records are ordered lexicographically
// by relative path.
ScanResult scan_corpus(const std::filesystem::path& root);

// Speaker-disjoint split; floor(train_fraction * n_speakers) speakers go to
// train (clamped so both sides are non-empty).
std::pair<Manifest, Manifest> split_speakers(const Manifest& m,
                                             double train_fraction,
                                             std::uint64_t seed);

// One utterance per line: utt_id<TAB>speaker_id<TAB>path<TAB>num_samples<TAB>sample_rate
void save_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);

// Writes `utt_id speaker_id dim=D` header then one line per utterance with D
// space-separated values at 9 significant digits. Returns rows written.
using EmbeddingFn = std::function<Eigen::VectorXd(const UtteranceRecord&)>;
int dump_embeddings(const Manifest& m, const EmbeddingFn& embed,
                    const std::filesystem::path& out_path, int dim);

}  // namespace protosv
