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

#include <unistd.h>

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "protosv/features.hpp"
#include "protosv/manifest.hpp"
#include "protosv/rng.hpp"

namespace protosv::testutil {

// Scratch directory wiped on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("protosv_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline FeatureMatrix random_features(int n_mels, int frames, Rng& rng) {
  FeatureMatrix f;
  f.values.resize(n_mels, frames);
  for (int r = 0; r < n_mels; ++r)
    for (int c = 0; c < frames; ++c) f.values(r, c) = rng.gaussian();
  return f;
}

// Fake manifest: n_speakers x utts_per_speaker records with synthetic paths.
inline Manifest fake_manifest(int n_speakers, int utts_per_speaker,
                              std::uint32_t num_samples = 48000) {
  std::vector<UtteranceRecord> records;
  char buf[64];
  for (int s = 0; s < n_speakers; ++s) {
    for (int u = 0; u < utts_per_speaker; ++u) {
      std::snprintf(buf, sizeof(buf), "spk%03d-utt%03d.wav", s, u);
      UtteranceRecord rec;
      rec.utt_id = buf;
      std::snprintf(buf, sizeof(buf), "spk%03d", s);
      rec.speaker_id = buf;
      rec.path = std::string("/none/") + rec.utt_id;
      rec.num_samples = num_samples;
      rec.sample_rate = 16000;
      records.push_back(std::move(rec));
    }
  }
  return Manifest::from_records(std::move(records));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace protosv::testutil
