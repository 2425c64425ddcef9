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

#include "protosv/features.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <vector>

#include "protosv/error.hpp"

namespace protosv {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kPreEmphasisCoeff = 0.97;
constexpr double kDitherAmplitude = 1e-5;
constexpr std::uint32_t kCacheVersion = 1;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// In-place iterative radix-2 complex FFT. n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Triangular filters with unit peak, evenly spaced on the mel scale.
// Row k holds the weights of filter k over FFT bins 0..fft_size/2.
Eigen::MatrixXd build_mel_filterbank(const FeatureConfig& cfg) {
  const int n_bins = cfg.fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  const double mel_step = (mel_hi - mel_lo) / (cfg.n_mels + 1);

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  for (int k = 0; k < cfg.n_mels; ++k) {
    const double left = mel_lo + k * mel_step;
    const double center = left + mel_step;
    const double right = center + mel_step;
    for (int b = 0; b < n_bins; ++b) {
      const double mel = hz_to_mel(b * bin_hz);
      if (mel <= left || mel >= right) continue;
      fb(k, b) = mel <= center ? (mel - left) / (center - left)
                               : (right - mel) / (right - center);
    }
  }
  return fb;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void FeatureConfig::validate() const {
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  if (hop_ms <= 0 || hop_ms > win_ms)
    throw ConfigError("need 0 < hop_ms <= win_ms");
  if (log_floor <= 0) throw ConfigError("log_floor must be > 0");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be > 0");
  if (!is_power_of_two(fft_size) || fft_size < win_samples())
    throw ConfigError("fft_size must be a power of two >= window length");
  if (fmax_hz <= fmin_hz || fmax_hz > sample_rate / 2.0)
    throw ConfigError("need fmin_hz < fmax_hz <= sample_rate/2");
}

int num_frames(std::int64_t num_samples, const FeatureConfig& cfg) {
  const int win = cfg.win_samples();
  const int hop = cfg.hop_samples();
  if (num_samples < win) return 0;
  return static_cast<int>(1 + (num_samples - win) / hop);
}

int frames_for_seconds(double seconds, const FeatureConfig& cfg) {
  const auto samples =
      static_cast<std::int64_t>(std::llround(seconds * cfg.sample_rate));
  return num_frames(samples, cfg);
}

FeatureMatrix compute_logmel(const Waveform& w, const FeatureConfig& cfg) {
  return mean_normalize(compute_logmel_raw(w, cfg));
}

FeatureMatrix compute_logmel_raw(const Waveform& w, const FeatureConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("sample-rate mismatch: waveform " +
                      std::to_string(w.sample_rate) + " Hz, config " +
                      std::to_string(cfg.sample_rate) + " Hz");
  const int win = cfg.win_samples();
  const int hop = cfg.hop_samples();
  const int t_frames = num_frames(static_cast<std::int64_t>(w.samples.size()), cfg);
  if (t_frames < 1)
    throw DataError("waveform shorter than one window (" +
                    std::to_string(w.samples.size()) + " < " +
                    std::to_string(win) + " samples)");

  std::vector<double> samples = w.samples;
  if (cfg.dither) {
    // Seeded from the content length so the pipeline stays deterministic.
    Rng rng(0x5eedULL ^ samples.size());
    for (auto& s : samples) s += kDitherAmplitude * (2.0 * rng.uniform() - 1.0);
  }
  if (cfg.pre_emphasis) {
    for (std::size_t i = samples.size(); i-- > 1;)
      samples[i] -= kPreEmphasisCoeff * samples[i - 1];
    samples[0] *= 1.0 - kPreEmphasisCoeff;
  }

  std::vector<double> window(win);
  for (int n = 0; n < win; ++n)
    window[n] = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (win - 1));

  const Eigen::MatrixXd fb = build_mel_filterbank(cfg);
  const int n_bins = cfg.fft_size / 2 + 1;

  FeatureMatrix out;
  out.values.resize(cfg.n_mels, t_frames);
  out.frame_hop_s = cfg.hop_ms / 1000.0;

  std::vector<std::complex<double>> buf(cfg.fft_size);
  Eigen::VectorXd power(n_bins);
  for (int t = 0; t < t_frames; ++t) {
    const double* frame = samples.data() + static_cast<std::size_t>(t) * hop;
    for (int n = 0; n < win; ++n) buf[n] = frame[n] * window[n];
    for (int n = win; n < cfg.fft_size; ++n) buf[n] = 0.0;
    fft_radix2(buf);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(buf[b]);
    Eigen::VectorXd mel = fb * power;
    for (int k = 0; k < cfg.n_mels; ++k)
      out.values(k, t) = std::log(std::max(mel[k], cfg.log_floor));
  }
  return out;
}

FeatureMatrix mean_normalize(const FeatureMatrix& f) {
  if (f.frames() < 1) throw DataError("mean_normalize: empty feature matrix");
  FeatureMatrix out = f;
  out.values.colwise() -= f.values.rowwise().mean();
  return out;
}

FeatureMatrix crop_or_duplicate(const FeatureMatrix& f, int target_frames,
                                Rng& rng) {
  if (target_frames < 1)
    throw DataError("crop_or_duplicate: target_frames must be >= 1");
  const int t = f.frames();
  if (t < 1) throw DataError("crop_or_duplicate: empty feature matrix");

  FeatureMatrix out;
  out.frame_hop_s = f.frame_hop_s;
  if (t >= target_frames) {
    const int start =
        static_cast<int>(rng.uniform_int(0, t - target_frames));
    out.values = f.values.middleCols(start, target_frames);
  } else {
    out.values.resize(f.n_mels(), target_frames);
    for (int c = 0; c < target_frames; ++c)
      out.values.col(c) = f.values.col(c % t);
  }
  return out;
}

void save_feature_cache(const std::filesystem::path& path,
                        const FeatureMatrix& f, const FeatureConfig& cfg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create feature cache: " + path.string());
  out.write("PSVF", 4);
  auto put_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  auto put_f64 = [&](double v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
  };
  put_u32(kCacheVersion);
  put_u32(static_cast<std::uint32_t>(f.n_mels()));
  put_u32(static_cast<std::uint32_t>(f.frames()));
  put_u32(static_cast<std::uint32_t>(cfg.sample_rate));
  put_f64(cfg.win_ms);
  put_f64(cfg.hop_ms);
  put_f64(f.frame_hop_s);
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(sizeof(double)) * f.values.size());
  if (!out) throw DataError("failed writing feature cache: " + path.string());
}

FeatureMatrix load_feature_cache(const std::filesystem::path& path,
                                 const FeatureConfig& expected_cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PSVF", 4) != 0)
    throw DataError("bad feature cache magic: " + path.string());
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_f64 = [&]() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  if (get_u32() != kCacheVersion)
    throw DataError("unsupported feature cache version: " + path.string());
  const std::uint32_t n_mels = get_u32();
  const std::uint32_t frames = get_u32();
  const std::uint32_t rate = get_u32();
  const double win_ms = get_f64();
  const double hop_ms = get_f64();
  const double frame_hop_s = get_f64();
  if (static_cast<int>(n_mels) != expected_cfg.n_mels ||
      static_cast<int>(rate) != expected_cfg.sample_rate ||
      win_ms != expected_cfg.win_ms || hop_ms != expected_cfg.hop_ms)
    throw ConfigError("feature cache header mismatch: " + path.string());

  FeatureMatrix f;
  f.frame_hop_s = frame_hop_s;
  f.values.resize(n_mels, frames);
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(sizeof(double)) * f.values.size());
  if (!in) throw DataError("truncated feature cache: " + path.string());
  return f;
}

}  // namespace protosv
