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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "protosv/error.hpp"
#include "protosv/features.hpp"
#include "protosv/wav.hpp"
#include "testutil.hpp"

using namespace protosv;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform sine_wave(double freq, double seconds, int rate = 16000,
                   double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / rate);
  return w;
}

// Independent oracle: log mel energies of one frame via a direct DFT and a
// freshly built triangular filterbank (no code shared with the pipeline).
std::vector<double> oracle_frame_logmel(const std::vector<double>& frame,
                                        const FeatureConfig& cfg) {
  const int win = cfg.win_samples();
  const int nfft = cfg.fft_size;
  std::vector<double> windowed(static_cast<std::size_t>(nfft), 0.0);
  for (int n = 0; n < win; ++n) {
    const double ham = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (win - 1));
    windowed[static_cast<std::size_t>(n)] = frame[static_cast<std::size_t>(n)] * ham;
  }
  const int n_bins = nfft / 2 + 1;
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (int k = 0; k < n_bins; ++k) {
    std::complex<double> acc(0, 0);
    for (int n = 0; n < nfft; ++n)
      acc += windowed[static_cast<std::size_t>(n)] *
             std::exp(std::complex<double>(0, -2.0 * kPi * k * n / nfft));
    power[static_cast<std::size_t>(k)] = std::norm(acc);
  }
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  const double mlo = mel(cfg.fmin_hz), mhi = mel(cfg.fmax_hz);
  const double step = (mhi - mlo) / (cfg.n_mels + 1);
  std::vector<double> out(static_cast<std::size_t>(cfg.n_mels));
  for (int j = 0; j < cfg.n_mels; ++j) {
    const double left = mlo + j * step, center = left + step, right = center + step;
    double e = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double m = mel(k * static_cast<double>(cfg.sample_rate) / nfft);
      if (m <= left || m >= right) continue;
      const double wgt = m <= center ? (m - left) / (center - left)
                                     : (right - m) / (right - center);
      e += wgt * power[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(j)] = std::log(std::max(e, cfg.log_floor));
  }
  return out;
}

// Center frequency (Hz) of mel filter k under cfg's layout.
double mel_center_hz(int k, const FeatureConfig& cfg) {
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double mlo = mel(cfg.fmin_hz), mhi = mel(cfg.fmax_hz);
  const double step = (mhi - mlo) / (cfg.n_mels + 1);
  return hz(mlo + (k + 1) * step);
}

}  // namespace

TEST_CASE("frame count formula") {
  FeatureConfig cfg;
  CHECK(cfg.win_samples() == 400);
  CHECK(cfg.hop_samples() == 160);
  CHECK(num_frames(32000, cfg) == 198);
  CHECK(frames_for_seconds(2.0, cfg) == 198);
  CHECK(frames_for_seconds(1.0, cfg) == 98);
  CHECK(frames_for_seconds(5.0, cfg) == 498);

  // property: T = 1 + floor((L - win)/hop) across random lengths
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto len = rng.uniform_int(400, 200000);
    const Waveform w{std::vector<double>(static_cast<std::size_t>(len), 0.1), 16000};
    const FeatureMatrix f = compute_logmel(w, cfg);
    CHECK(f.frames() == 1 + (len - 400) / 160);
  }
}

TEST_CASE("compute_logmel basic contracts") {
  FeatureConfig cfg;
  SUBCASE("sample rate mismatch is a configuration error") {
    Waveform w = sine_wave(440.0, 0.5, 8000);
    CHECK_THROWS_AS(compute_logmel(w, cfg), ConfigError);
  }
  SUBCASE("waveform shorter than one window is an input error") {
    Waveform w{std::vector<double>(399, 0.1), 16000};
    CHECK_THROWS_AS(compute_logmel(w, cfg), DataError);
  }
  SUBCASE("constant-zero waveform gives an all-zero matrix") {
    Waveform w{std::vector<double>(8000, 0.0), 16000};
    const FeatureMatrix f = compute_logmel(w, cfg);
    CHECK(f.values.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("deterministic: same waveform twice is bitwise equal") {
    const Waveform w = sine_wave(1000.0, 0.8);
    const FeatureMatrix a = compute_logmel(w, cfg);
    const FeatureMatrix b = compute_logmel(w, cfg);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("sinusoid at a mel center peaks in that bin (direct-DFT oracle)") {
  FeatureConfig cfg;
  for (int k : {2, 5, 10, 17, 25, 32, 38}) {
    CAPTURE(k);
    const double freq = mel_center_hz(k, cfg);
    const Waveform w = sine_wave(freq, 0.3);
    const FeatureMatrix raw = compute_logmel_raw(w, cfg);
    for (int t = 0; t < raw.frames(); ++t) {
      int argmax = 0;
      raw.values.col(t).maxCoeff(&argmax);
      CHECK(argmax == k);
    }
    // pipeline frame values match the independent DFT oracle
    std::vector<double> frame(w.samples.begin(), w.samples.begin() + 400);
    const auto oracle = oracle_frame_logmel(frame, cfg);
    for (int j = 0; j < cfg.n_mels; ++j)
      CHECK(raw.values(j, 0) == doctest::Approx(oracle[static_cast<std::size_t>(j)])
                                    .epsilon(1e-9));
  }
}

TEST_CASE("mean_normalize") {
  FeatureMatrix f;
  f.values.resize(1, 3);
  f.values << 1, 2, 3;
  const FeatureMatrix g = mean_normalize(f);
  CHECK(g.values(0, 0) == doctest::Approx(-1.0));
  CHECK(g.values(0, 1) == doctest::Approx(0.0));
  CHECK(g.values(0, 2) == doctest::Approx(1.0));

  SUBCASE("idempotent") {
    const FeatureMatrix h = mean_normalize(g);
    CHECK((h.values - g.values).cwiseAbs().maxCoeff() < 1e-7);
  }
  SUBCASE("constant matrix becomes zero") {
    FeatureMatrix c;
    c.values = Eigen::MatrixXd::Constant(4, 7, 3.25);
    CHECK(mean_normalize(c).values.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("every row is zero-mean after normalization") {
    Rng rng(3);
    const FeatureMatrix r = testutil::random_features(40, 57, rng);
    const FeatureMatrix n = mean_normalize(r);
    for (int row = 0; row < 40; ++row)
      CHECK(std::abs(n.values.row(row).mean()) < 1e-5);
  }
}

TEST_CASE("crop_or_duplicate") {
  Rng feature_rng(11);
  const FeatureMatrix f = testutil::random_features(4, 300, feature_rng);

  SUBCASE("crop takes a contiguous slice with start in [0, T-target]") {
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(static_cast<std::uint64_t>(trial));
      const FeatureMatrix c = crop_or_duplicate(f, 200, rng);
      REQUIRE(c.frames() == 200);
      bool found = false;
      for (int start = 0; start <= 100 && !found; ++start)
        if (c.values == f.values.middleCols(start, 200)) found = true;
      CHECK(found);
    }
  }
  SUBCASE("duplication tiles the matrix from frame 0") {
    Rng rng(1);
    const FeatureMatrix small = crop_or_duplicate(f, 100, rng);
    const FeatureMatrix tiled = crop_or_duplicate(small, 250, rng);
    REQUIRE(tiled.frames() == 250);
    for (int c = 0; c < 250; ++c)
      CHECK(tiled.values.col(c) == small.values.col(c % 100));
  }
  SUBCASE("exact length is identity") {
    Rng rng(2);
    const FeatureMatrix same = crop_or_duplicate(f, 300, rng);
    CHECK(same.values == f.values);
  }
  SUBCASE("target zero is an input error") {
    Rng rng(3);
    CHECK_THROWS_AS(crop_or_duplicate(f, 0, rng), DataError);
  }
  SUBCASE("deterministic under a fixed seed") {
    Rng a(99), b(99);
    CHECK(crop_or_duplicate(f, 123, a).values ==
          crop_or_duplicate(f, 123, b).values);
  }
  SUBCASE("output always has exactly target_frames columns") {
    Rng rng(4);
    for (int target : {1, 33, 299, 300, 301, 907})
      CHECK(crop_or_duplicate(f, target, rng).frames() == target);
  }
}

TEST_CASE("wav round-trip and header info") {
  testutil::TempDir tmp("wav");
  const Waveform w = sine_wave(523.0, 0.25);
  const auto path = tmp.path() / "tone.wav";
  write_wav(path, w);

  const WavInfo info = read_wav_info(path);
  CHECK(info.sample_rate == 16000);
  CHECK(info.num_samples == w.samples.size());

  const Waveform r = read_wav(path);
  REQUIRE(r.samples.size() == w.samples.size());
  // 16-bit quantization error only
  for (std::size_t i = 0; i < r.samples.size(); i += 97)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 32000.0);

  SUBCASE("round-trip of already quantized samples is exact") {
    write_wav(tmp.path() / "again.wav", r);
    const Waveform r2 = read_wav(tmp.path() / "again.wav");
    CHECK(r2.samples == r.samples);
  }
  SUBCASE("non-wav file is a data error") {
    std::ofstream(tmp.path() / "junk.wav") << "not audio";
    CHECK_THROWS_AS(read_wav(tmp.path() / "junk.wav"), DataError);
  }
}

TEST_CASE("feature cache round-trips bit-exactly") {
  testutil::TempDir tmp("featcache");
  FeatureConfig cfg;
  const Waveform w = sine_wave(700.0, 0.5);
  const FeatureMatrix f = compute_logmel(w, cfg);
  const auto path = tmp.path() / "utt.feat";
  save_feature_cache(path, f, cfg);
  const FeatureMatrix r = load_feature_cache(path, cfg);
  CHECK(r.values == f.values);  // bitwise
  CHECK(r.frame_hop_s == f.frame_hop_s);

  SUBCASE("header mismatch is a configuration error") {
    FeatureConfig other = cfg;
    other.n_mels = 64;
    CHECK_THROWS_AS(load_feature_cache(path, other), ConfigError);
  }
}
