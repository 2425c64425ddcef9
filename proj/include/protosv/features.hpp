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
#include <filesystem>

#include "protosv/rng.hpp"
#include "protosv/wav.hpp"

namespace protosv {

// Log mel-filterbank extraction settings. 40 mel bins over 0-8000 Hz,
// 25 ms Hamming windows every 10 ms (15 ms overlap), 512-point FFT.
// Pre-emphasis and dither are off unless enabled here.
struct FeatureConfig {
  int n_mels = 40;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  int sample_rate = 16000;
  double log_floor = 1e-10;
  int fft_size = 512;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  bool pre_emphasis = false;   // coefficient 0.97 when enabled
  bool dither = false;         // +-1e-5 uniform noise when enabled (seeded)

  int win_samples() const {
    return static_cast<int>(win_ms * sample_rate / 1000.0 + 0.5);
  }
  int hop_samples() const {
    return static_cast<int>(hop_ms * sample_rate / 1000.0 + 0.5);
  }

  void validate() const;
};

// n_mels x T matrix of mean-normalized log mel energies; one column per frame.
struct FeatureMatrix {
  Eigen::MatrixXd values;   // n_mels rows, T columns
  double frame_hop_s = 0.0109;

  int n_mels() const { return static_cast<int>(values.rows()); }
  int frames() const { return static_cast<int>(values.cols()); }
};

// T = 1 + floor((L - win) / hop); requires L >= win.
int num_frames(std::int64_t num_samples, const FeatureConfig& cfg);

// Frame count of a segment lasting `seconds` of audio at cfg's rates.
int frames_for_seconds(double seconds, const FeatureConfig& cfg);

// Full pipeline: frame, window (Hamming), FFT power spectrum, triangular mel
// filterbank, log with floor, then mean normalization along time.
FeatureMatrix compute_logmel(const Waveform& w, const FeatureConfig& cfg);

// Same pipeline without the final mean normalization.
FeatureMatrix compute_logmel_raw(const Waveform& w, const FeatureConfig& cfg);

// Subtracts each mel row's time-mean. Idempotent.
FeatureMatrix mean_normalize(const FeatureMatrix& f);

// If T >= target: contiguous random slice (start uniform on [0, T-target]).
// If T < target: the matrix tiled end-to-end along time, truncated.
FeatureMatrix crop_or_duplicate(const FeatureMatrix& f, int target_frames,
                                Rng& rng);

// Per-utterance cache container, round-trips bit-exactly.
// Layout (little-endian): magic "PSVF", u32 version, u32 n_mels, u32 frames,
// u32 sample_rate, f64 win_ms, f64 hop_ms, f64 frame_hop_s, then the matrix
// as f64 column-major (frame after frame).
void save_feature_cache(const std::filesystem::path& path,
                        const FeatureMatrix& f, const FeatureConfig& cfg);
FeatureMatrix load_feature_cache(const std::filesystem::path& path,
                                 const FeatureConfig& expected_cfg);

}  // namespace protosv
