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
#include <vector>

#include "protosv/features.hpp"
#include "protosv/manifest.hpp"

namespace protosv {

// Deterministic multi-speaker corpus: each speaker is a set of formant
// frequencies, each utterance a sum of those sinusoids with random phases
// and slowly varying per-formant amplitude envelopes, plus white noise.
// The envelopes make short crops genuinely harder than long ones.
struct SyntheticSpec {
  int n_speakers = 20;
  int utterances_per_speaker = 10;
  double min_seconds = 3.0;
  double max_seconds = 8.0;
  std::vector<std::vector<double>> formant_sets;  // one set per speaker, Hz
  double noise_level = 0.1;  // white-noise amplitude relative to the tones
  std::uint64_t seed = 1;
  int sample_rate = 16000;
  double envelope_knot_seconds = 0.25;

  void validate() const;
};

// Distinct 3-frequency subsets drawn from a mel-spaced pool; neighbouring
// speakers share individual formants, which is what makes short segments
// confusable.
std::vector<std::vector<double>> default_formant_sets(int n_speakers,
                                                      std::uint64_t seed);

struct GenerateResult {
  Manifest manifest;
  int files_written = 0;
};

// Writes 16 kHz 16-bit PCM files under out_dir/spkNNN/uttNNN.wav and returns
// the matching manifest. Byte-identical for identical specs.
GenerateResult generate(const SyntheticSpec& spec,
                        const std::filesystem::path& out_dir);

// Leave-one-out nearest-centroid accuracy on time-averaged log-mel features;
// the sanity bound a trained encoder has to beat.
double nearest_centroid_accuracy(const Manifest& m, const FeatureConfig& fcfg);

}  // namespace protosv
