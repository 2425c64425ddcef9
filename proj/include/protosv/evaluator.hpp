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
#include <optional>
#include <string>
#include <vector>

#include "protosv/encoder.hpp"
#include "protosv/manifest.hpp"
#include "protosv/rng.hpp"
#include "protosv/sampler.hpp"

namespace protosv {

struct Trial {
  int label = 0;  // 1 = target (same speaker), 0 = nontarget
  std::string enroll_utt;
  std::string test_utt;
};

struct TrialGenResult {
  std::vector<Trial> trials;
  int skipped_speakers = 0;  // had fewer than 2 utterances
};

// Per eligible speaker: pos_per_spk same-speaker pairs over distinct
// utterances and neg_per_spk pairs against uniformly sampled other-speaker
// utterances.
TrialGenResult generate_trials(const Manifest& m, int pos_per_spk,
                               int neg_per_spk, Rng& rng);

// One trial per line: `label enroll_utt test_utt`.
void save_trials(const std::filesystem::path& path,
                 const std::vector<Trial>& trials);
std::vector<Trial> load_trials(const std::filesystem::path& path);

// Plain cosine similarity, both vectors normalized; in [-1, 1].
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Equal error rate with linear interpolation between adjacent ROC operating
// points; also returns the crossing threshold.
struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};
EerResult compute_eer(const std::vector<double>& scores,
                      const std::vector<int>& labels);

// Normalized minimum detection cost, swept over every distinct score plus
// the reject-all endpoint.
double compute_min_dcf(const std::vector<double>& scores,
                       const std::vector<int>& labels, double p_target = 0.01,
                       double c_miss = 1.0, double c_fa = 1.0);

struct VerificationReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double min_dcf = 0.0;
  int n_target = 0;
  int n_nontarget = 0;
};

// Scores trials by cosine over the supplied embeddings and computes EER and
// minDCF. Throws DataError naming the utt_id on any missing embedding.
VerificationReport score_and_report(
    const std::vector<Trial>& trials,
    const std::map<std::string, Eigen::VectorXd>& enroll_embs,
    const std::map<std::string, Eigen::VectorXd>& test_embs,
    std::vector<double>* scores_out = nullptr);

// Full verification pass: enrollment embeddings on full utterances, test
// embeddings on segments cropped/duplicated to test_seconds (or full when
// unset).
VerificationReport evaluate_verification(const std::vector<Trial>& trials,
                                         const Manifest& m,
                                         const FeatureSource& features,
                                         const Encoder& encoder,
                                         const FeatureConfig& fcfg,
                                         std::optional<double> test_seconds,
                                         Rng& rng);

struct IdentificationProtocol {
  int n_way = 5;
  int episodes = 1000;
  double enroll_seconds = 5.0;
  int test_per_spk = 5;
  double query_seconds = 1.0;
};

struct IdentificationReport {
  int n_way = 0;
  double query_seconds = 0.0;
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // NaN when episodes == 1
  int episodes = 0;
};

// N-way unseen-speaker identification: per episode, one enrollment per
// sampled speaker (cropped/duplicated to enroll_seconds) and test_per_spk
// queries at query_seconds; prediction is the argmax cosine against the
// enrollment embeddings, ties broken by lowest enrolled index. The report
// carries the mean accuracy over episodes with a 1.96*std/sqrt(E) interval.
IdentificationReport evaluate_identification(const Manifest& m,
                                             const FeatureSource& features,
                                             const Encoder& encoder,
                                             const FeatureConfig& fcfg,
                                             const IdentificationProtocol& proto,
                                             Rng& rng);

}  // namespace protosv
