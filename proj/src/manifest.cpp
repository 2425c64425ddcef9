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

#include "protosv/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "protosv/error.hpp"
#include "protosv/rng.hpp"
#include "protosv/wav.hpp"

namespace protosv {

Manifest Manifest::from_records(std::vector<UtteranceRecord> records) {
  Manifest m;
  m.records_ = std::move(records);
  for (std::size_t i = 0; i < m.records_.size(); ++i) {
    const auto& r = m.records_[i];
    if (r.num_samples == 0)
      throw DataError("record has zero samples: " + r.utt_id);
    if (!m.by_id_.emplace(r.utt_id, i).second)
      throw DataError("duplicate utt_id in manifest: " + r.utt_id);
    m.speakers_[r.speaker_id].push_back(r.utt_id);
  }
  return m;
}

std::vector<std::string> Manifest::speaker_ids() const {
  std::vector<std::string> ids;
  ids.reserve(speakers_.size());
  for (const auto& [spk, utts] : speakers_) ids.push_back(spk);
  return ids;
}

const UtteranceRecord& Manifest::record(const std::string& utt_id) const {
  auto it = by_id_.find(utt_id);
  if (it == by_id_.end())
    throw DataError("utt_id not in manifest: " + utt_id);
  return records_[it->second];
}

std::map<std::string, int> Manifest::class_map() const {
  std::map<std::string, int> ids;
  int next = 1;
  for (const auto& [spk, utts] : speakers_) ids[spk] = next++;
  return ids;
}

ScanResult scan_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw DataError("corpus root is not a directory: " + root.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(fs::relative(entry.path(), root));
  }
  std::sort(files.begin(), files.end());

  ScanResult result;
  std::vector<UtteranceRecord> records;
  for (const auto& rel : files) {
    if (rel.begin() == rel.end() || std::next(rel.begin()) == rel.end()) {
      ++result.skipped;  // file directly under root, no speaker directory
      continue;
    }
    UtteranceRecord rec;
    rec.speaker_id = rel.begin()->string();
    std::string id = rel.generic_string();
    std::replace(id.begin(), id.end(), '/', '-');
    rec.utt_id = id;
    rec.path = root / rel;
    try {
      const WavInfo info = read_wav_info(rec.path);
      rec.num_samples = info.num_samples;
      rec.sample_rate = info.sample_rate;
    } catch (const DataError& e) {
      std::cerr << "warning: skipping " << rec.path.string() << ": "
                << e.what() << "\n";
      ++result.skipped;
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError("no speakers found in " + root.string());
  result.manifest = Manifest::from_records(std::move(records));
  return result;
}

std::pair<Manifest, Manifest> split_speakers(const Manifest& m,
                                             double train_fraction,
                                             std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ConfigError("train_fraction must be in (0, 1)");
  const auto speakers = m.speaker_ids();
  const std::size_t n = speakers.size();
  if (n < 2) throw DataError("split_speakers needs at least 2 speakers");

  std::vector<std::string> shuffled = speakers;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(shuffled[i], shuffled[j]);
  }
  auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::map<std::string, bool> in_train;
  for (std::size_t i = 0; i < n; ++i) in_train[shuffled[i]] = i < n_train;

  std::vector<UtteranceRecord> train_recs, test_recs;
  for (const auto& r : m.records())
    (in_train.at(r.speaker_id) ? train_recs : test_recs).push_back(r);
  return {Manifest::from_records(std::move(train_recs)),
          Manifest::from_records(std::move(test_recs))};
}

void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot create manifest file: " + path.string());
  for (const auto& r : m.records()) {
    out << r.utt_id << '\t' << r.speaker_id << '\t' << r.path.string() << '\t'
        << r.num_samples << '\t' << r.sample_rate << '\n';
  }
  if (!out) throw DataError("failed writing manifest: " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest file: " + path.string());
  std::vector<UtteranceRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    UtteranceRecord r;
    std::string path_str, samples_str, rate_str;
    if (!std::getline(ss, r.utt_id, '\t') ||
        !std::getline(ss, r.speaker_id, '\t') ||
        !std::getline(ss, path_str, '\t') ||
        !std::getline(ss, samples_str, '\t') || !std::getline(ss, rate_str))
      throw DataError("malformed manifest line " + std::to_string(lineno) +
                      " in " + path.string());
    r.path = path_str;
    r.num_samples = static_cast<std::uint32_t>(std::stoul(samples_str));
    r.sample_rate = std::stoi(rate_str);
    records.push_back(std::move(r));
  }
  if (records.empty())
    throw DataError("manifest is empty: " + path.string());
  return Manifest::from_records(std::move(records));
}

int dump_embeddings(const Manifest& m, const EmbeddingFn& embed,
                    const std::filesystem::path& out_path, int dim) {
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw DataError("cannot create embedding dump: " + out_path.string());
  out << "utt_id speaker_id dim=" << dim << '\n';
  int written = 0;
  char buf[32];
  for (const auto& r : m.records()) {
    const Eigen::VectorXd v = embed(r);
    if (v.size() != dim)
      throw DataError("embedding for " + r.utt_id + " has dimension " +
                      std::to_string(v.size()) + ", expected " +
                      std::to_string(dim));
    out << r.utt_id << ' ' << r.speaker_id;
    for (int i = 0; i < dim; ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", v[i]);
      out << ' ' << buf;
    }
    out << '\n';
    ++written;
  }
  if (!out) throw DataError("failed writing embedding dump: " + out_path.string());
  return written;
}

}  // namespace protosv
