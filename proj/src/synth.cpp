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

#include "protosv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "protosv/error.hpp"
#include "protosv/rng.hpp"
#include "protosv/wav.hpp"

namespace protosv {

namespace {
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
}

void SyntheticSpec::validate() const {
  if (n_speakers < 1) throw ConfigError("n_speakers must be >= 1");
  if (utterances_per_speaker < 1)
    throw ConfigError("utterances_per_speaker must be >= 1");
  if (min_seconds <= 0 || min_seconds > max_seconds)
    throw ConfigError("need 0 < min_seconds <= max_seconds");
  if (noise_level < 0) throw ConfigError("noise_level must be >= 0");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be > 0");
  if (formant_sets.size() != static_cast<std::size_t>(n_speakers))
    throw ConfigError("need one formant set per speaker");
  for (const auto& set : formant_sets) {
    if (set.empty()) throw ConfigError("empty formant set");
    for (double f : set)
      if (f <= 0 || f >= sample_rate / 2.0)
        throw ConfigError("formant frequency outside (0, nyquist)");
  }
  // Sets must be pairwise distinct; sharing individual frequencies is fine.
  for (std::size_t i = 0; i < formant_sets.size(); ++i) {
    auto a = formant_sets[i];
    std::sort(a.begin(), a.end());
    for (std::size_t j = i + 1; j < formant_sets.size(); ++j) {
      auto b = formant_sets[j];
      std::sort(b.begin(), b.end());
      if (a == b)
        throw ConfigError("speakers " + std::to_string(i) + " and " +
                          std::to_string(j) + " have overlapping formant sets");
    }
  }
}

std::vector<std::vector<double>> default_formant_sets(int n_speakers,
                                                      std::uint64_t seed) {
  // Pool of 10 tones, mel-spaced between 300 Hz and 7 kHz.
  constexpr int kPoolSize = 10;
  constexpr int kPerSpeaker = 3;
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> pool;
  const double lo = mel(300.0), hi = mel(7000.0);
  for (int i = 0; i < kPoolSize; ++i)
    pool.push_back(std::floor(hz(lo + (hi - lo) * i / (kPoolSize - 1))));

  Rng rng(seed ^ 0xf0e1d2c3b4a59687ULL);
  std::vector<std::vector<double>> sets;
  std::vector<std::vector<int>> used;
  while (static_cast<int>(sets.size()) < n_speakers) {
    std::vector<int> combo;
    while (static_cast<int>(combo.size()) < kPerSpeaker) {
      const int c = static_cast<int>(rng.uniform_int(0, kPoolSize - 1));
      if (std::find(combo.begin(), combo.end(), c) == combo.end())
        combo.push_back(c);
    }
    std::sort(combo.begin(), combo.end());
    if (std::find(used.begin(), used.end(), combo) != used.end()) continue;
    used.push_back(combo);
    std::vector<double> set;
    for (int c : combo) set.push_back(pool[static_cast<std::size_t>(c)]);
    sets.push_back(std::move(set));
  }
  return sets;
}

namespace {

Waveform render_utterance(const SyntheticSpec& spec,
                          const std::vector<double>& formants, Rng& rng) {
  const double seconds = rng.uniform(spec.min_seconds, spec.max_seconds);
  const auto n = static_cast<std::size_t>(seconds * spec.sample_rate);
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.assign(n, 0.0);

  const auto knot_len = static_cast<std::size_t>(
      std::max(1.0, spec.envelope_knot_seconds * spec.sample_rate));
  const std::size_t n_knots = n / knot_len + 2;

  for (double freq : formants) {
    const double phase = rng.uniform(0.0, kTwoPi);
    // Piecewise-linear amplitude envelope between random knots; a short
    // crop hears an unbalanced mixture of the speaker's formants.
    std::vector<double> knots(n_knots);
    for (auto& k : knots) k = rng.uniform(0.05, 1.0);
    const double omega = kTwoPi * freq / spec.sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i / knot_len;
      const double t = static_cast<double>(i % knot_len) / static_cast<double>(knot_len);
      const double env = knots[k] + t * (knots[k + 1] - knots[k]);
      w.samples[i] += env * std::sin(omega * static_cast<double>(i) + phase);
    }
  }
  if (spec.noise_level > 0) {
    for (auto& s : w.samples) s += spec.noise_level * rng.gaussian();
  }
  double peak = 1e-12;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  const double gain = 0.9 / peak;
  for (auto& s : w.samples) s *= gain;
  return w;
}

}  // namespace

GenerateResult generate(const SyntheticSpec& spec,
                        const std::filesystem::path& out_dir) {
  spec.validate();
  const int min_window_samples = 400;  // 25 ms at 16 kHz
  if (spec.min_seconds * spec.sample_rate <= min_window_samples)
    throw ConfigError("utterance durations must exceed the feature window");
  std::filesystem::create_directories(out_dir);

  Rng master(spec.seed);
  GenerateResult result;
  std::vector<UtteranceRecord> records;
  char name[64];
  for (int s = 0; s < spec.n_speakers; ++s) {
    std::snprintf(name, sizeof(name), "spk%03d", s);
    const std::string spk = name;
    std::filesystem::create_directories(out_dir / spk);
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      Rng rng = master.split("utt", static_cast<std::uint64_t>(s) * 100003 + u);
      const Waveform w = render_utterance(
          spec, spec.formant_sets[static_cast<std::size_t>(s)], rng);
      std::snprintf(name, sizeof(name), "utt%03d.wav", u);
      const auto path = out_dir / spk / name;
      write_wav(path, w);
      ++result.files_written;

      UtteranceRecord rec;
      rec.speaker_id = spk;
      rec.utt_id = spk + "-" + name;
      rec.path = path;
      rec.num_samples = static_cast<std::uint32_t>(w.samples.size());
      rec.sample_rate = w.sample_rate;
      records.push_back(std::move(rec));
    }
  }
  result.manifest = Manifest::from_records(std::move(records));
  return result;
}

double nearest_centroid_accuracy(const Manifest& m, const FeatureConfig& fcfg) {
  struct Item {
    Eigen::VectorXd profile;
    std::string speaker;
  };
  std::vector<Item> items;
  std::map<std::string, Eigen::VectorXd> sums;
  std::map<std::string, int> counts;
  for (const auto& rec : m.records()) {
    const FeatureMatrix f = compute_logmel_raw(read_wav(rec.path), fcfg);
    Item item{f.values.rowwise().mean(), rec.speaker_id};
    if (sums.count(rec.speaker_id) == 0) {
      sums[rec.speaker_id] = Eigen::VectorXd::Zero(fcfg.n_mels);
      counts[rec.speaker_id] = 0;
    }
    sums[rec.speaker_id] += item.profile;
    ++counts[rec.speaker_id];
    items.push_back(std::move(item));
  }
  int correct = 0;
  for (const auto& item : items) {
    double best = std::numeric_limits<double>::infinity();
    std::string best_spk;
    for (const auto& [spk, sum] : sums) {
      // leave the query out of its own centroid
      const int n = counts.at(spk) - (spk == item.speaker ? 1 : 0);
      if (n < 1) continue;
      const Eigen::VectorXd centroid =
          (spk == item.speaker ? sum - item.profile : sum) / n;
      const double d = (centroid - item.profile).squaredNorm();
      if (d < best) {
        best = d;
        best_spk = spk;
      }
    }
    if (best_spk == item.speaker) ++correct;
  }
  return items.empty() ? 0.0 : static_cast<double>(correct) / items.size();
}

}  // namespace protosv
