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

#include "protosv/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "protosv/error.hpp"

namespace protosv {

using Eigen::VectorXd;

TrialGenResult generate_trials(const Manifest& m, int pos_per_spk,
                               int neg_per_spk, Rng& rng) {
  if (pos_per_spk < 1 || neg_per_spk < 1)
    throw ConfigError("trial counts must be >= 1");
  if (m.num_speakers() < 2)
    throw DataError("trial generation needs at least 2 speakers");

  const auto& records = m.records();
  TrialGenResult result;
  for (const auto& [spk, utts] : m.speakers()) {
    if (utts.size() < 2) {
      std::cerr << "warning: speaker " << spk
                << " has one utterance, skipping trials\n";
      ++result.skipped_speakers;
      continue;
    }
    const auto n = static_cast<std::int64_t>(utts.size());
    for (int i = 0; i < pos_per_spk; ++i) {
      const auto a = rng.uniform_int(0, n - 1);
      std::int64_t b = rng.uniform_int(0, n - 2);
      if (b >= a) ++b;  // distinct second utterance
      result.trials.push_back(
          {1, utts[static_cast<std::size_t>(a)], utts[static_cast<std::size_t>(b)]});
    }
    for (int i = 0; i < neg_per_spk; ++i) {
      const auto a = rng.uniform_int(0, n - 1);
      // uniform over all utterances belonging to other speakers
      const UtteranceRecord* other = nullptr;
      do {
        other = &records[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(records.size()) - 1))];
      } while (other->speaker_id == spk);
      result.trials.push_back(
          {0, utts[static_cast<std::size_t>(a)], other->utt_id});
    }
  }
  if (result.trials.empty())
    throw DataError("no trials generated: every speaker has one utterance");
  return result;
}

void save_trials(const std::filesystem::path& path,
                 const std::vector<Trial>& trials) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot create trial list: " + path.string());
  for (const auto& t : trials)
    out << t.label << ' ' << t.enroll_utt << ' ' << t.test_utt << '\n';
  if (!out) throw DataError("failed writing trial list: " + path.string());
}

std::vector<Trial> load_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trial list: " + path.string());
  std::vector<Trial> trials;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Trial t;
    if (!(ss >> t.label >> t.enroll_utt >> t.test_utt) ||
        (t.label != 0 && t.label != 1))
      throw DataError("malformed trial at line " + std::to_string(lineno) +
                      " in " + path.string());
    trials.push_back(std::move(t));
  }
  if (trials.empty()) throw DataError("trial list is empty: " + path.string());
  return trials;
}

double cosine_similarity(const VectorXd& a, const VectorXd& b) {
  const double denom = a.norm() * b.norm();
  if (denom < 1e-300) return 0.0;
  return a.dot(b) / denom;
}

namespace {

struct OperatingPoint {
  double threshold;  // decision rule: accept iff score >= threshold
  double frr;        // targets rejected
  double far;        // nontargets accepted
};

// Operating points at every distinct score plus a reject-all sentinel,
// ordered by increasing threshold. frr is nondecreasing, far nonincreasing.
std::vector<OperatingPoint> roc_points(const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("score and label counts differ");
  std::vector<double> targets, nontargets;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw NumericError("non-finite trial score");
    (labels[i] == 1 ? targets : nontargets).push_back(scores[i]);
  }
  if (targets.empty() || nontargets.empty())
    throw DataError("need at least one target and one nontarget trial");
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());

  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // reject-all

  std::vector<OperatingPoint> pts;
  pts.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto miss = static_cast<double>(
        std::lower_bound(targets.begin(), targets.end(), t) - targets.begin());
    const auto fa = static_cast<double>(
        nontargets.end() -
        std::lower_bound(nontargets.begin(), nontargets.end(), t));
    pts.push_back({t, miss / static_cast<double>(targets.size()),
                   fa / static_cast<double>(nontargets.size())});
  }
  return pts;
}

}  // namespace

EerResult compute_eer(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  const auto pts = roc_points(scores, labels);
  // frr - far runs from -1 at the lowest threshold to +1 at reject-all.
  // Return the exact operating point when one exists, otherwise intersect
  // the segment between the bracketing points with the frr == far diagonal.
  for (const auto& p : pts)
    if (p.frr == p.far) return {p.frr, p.threshold};
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double d0 = pts[k].frr - pts[k].far;
    const double d1 = pts[k + 1].frr - pts[k + 1].far;
    if (d0 < 0.0 && d1 > 0.0) {
      const double s = -d0 / (d1 - d0);
      const double eer = pts[k].frr + s * (pts[k + 1].frr - pts[k].frr);
      const double thr =
          pts[k].threshold + s * (pts[k + 1].threshold - pts[k].threshold);
      return {eer, thr};
    }
  }
  throw NumericError("EER crossing not found");  // unreachable for valid input
}

double compute_min_dcf(const std::vector<double>& scores,
                       const std::vector<int>& labels, double p_target,
                       double c_miss, double c_fa) {
  if (p_target <= 0.0 || p_target >= 1.0)
    throw ConfigError("p_target must be in (0, 1)");
  const auto pts = roc_points(scores, labels);
  const double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    const double cost =
        c_miss * p.frr * p_target + c_fa * p.far * (1.0 - p_target);
    best = std::min(best, cost / norm);
  }
  return best;
}

VerificationReport score_and_report(
    const std::vector<Trial>& trials,
    const std::map<std::string, VectorXd>& enroll_embs,
    const std::map<std::string, VectorXd>& test_embs,
    std::vector<double>* scores_out) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(trials.size());
  labels.reserve(trials.size());
  for (const auto& t : trials) {
    const auto e = enroll_embs.find(t.enroll_utt);
    if (e == enroll_embs.end())
      throw DataError("missing enrollment embedding for " + t.enroll_utt);
    const auto q = test_embs.find(t.test_utt);
    if (q == test_embs.end())
      throw DataError("missing test embedding for " + t.test_utt);
    scores.push_back(cosine_similarity(e->second, q->second));
    labels.push_back(t.label);
  }
  const EerResult eer = compute_eer(scores, labels);
  VerificationReport report;
  report.eer = eer.eer;
  report.eer_threshold = eer.threshold;
  report.min_dcf = compute_min_dcf(scores, labels);
  report.n_target = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  report.n_nontarget = static_cast<int>(labels.size()) - report.n_target;
  if (scores_out) *scores_out = std::move(scores);
  return report;
}

VerificationReport evaluate_verification(const std::vector<Trial>& trials,
                                         const Manifest& m,
                                         const FeatureSource& features,
                                         const Encoder& encoder,
                                         const FeatureConfig& fcfg,
                                         std::optional<double> test_seconds,
                                         Rng& rng) {
  std::set<std::string> enroll_ids, test_ids;
  for (const auto& t : trials) {
    enroll_ids.insert(t.enroll_utt);
    test_ids.insert(t.test_utt);
  }
  std::map<std::string, VectorXd> enroll_embs, test_embs;
  for (const auto& id : enroll_ids) {
    if (!m.has(id)) throw DataError("trial utterance not in manifest: " + id);
    enroll_embs[id] = encoder.embed(features(id));
  }
  const int target_frames =
      test_seconds ? frames_for_seconds(*test_seconds, fcfg) : 0;
  for (const auto& id : test_ids) {
    if (!m.has(id)) throw DataError("trial utterance not in manifest: " + id);
    const FeatureMatrix& full = features(id);
    test_embs[id] = test_seconds
                        ? encoder.embed(crop_or_duplicate(full, target_frames, rng))
                        : encoder.embed(full);
  }
  return score_and_report(trials, enroll_embs, test_embs);
}

IdentificationReport evaluate_identification(const Manifest& m,
                                             const FeatureSource& features,
                                             const Encoder& encoder,
                                             const FeatureConfig& fcfg,
                                             const IdentificationProtocol& proto,
                                             Rng& rng) {
  if (proto.n_way < 2) throw ConfigError("n_way must be >= 2");
  if (proto.episodes < 1) throw ConfigError("episodes must be >= 1");
  const auto speakers = m.speaker_ids();
  if (speakers.size() < static_cast<std::size_t>(proto.n_way))
    throw DataError("identification needs " + std::to_string(proto.n_way) +
                    " speakers but manifest has " +
                    std::to_string(speakers.size()));

  const int enroll_frames = frames_for_seconds(proto.enroll_seconds, fcfg);
  const int query_frames = frames_for_seconds(proto.query_seconds, fcfg);

  std::vector<double> accuracies;
  accuracies.reserve(static_cast<std::size_t>(proto.episodes));
  for (int e = 0; e < proto.episodes; ++e) {
    const auto chosen = sample_indices(
        speakers.size(), static_cast<std::size_t>(proto.n_way), rng);
    std::vector<VectorXd> enroll_embs;
    std::vector<std::vector<std::string>> test_utts(
        static_cast<std::size_t>(proto.n_way));
    for (int c = 0; c < proto.n_way; ++c) {
      const auto& utts =
          m.speakers().at(speakers[chosen[static_cast<std::size_t>(c)]]);
      auto draws = draw_utterances(
          utts, static_cast<std::size_t>(1 + proto.test_per_spk), rng);
      enroll_embs.push_back(encoder.embed(
          crop_or_duplicate(features(draws[0]), enroll_frames, rng)));
      test_utts[static_cast<std::size_t>(c)].assign(draws.begin() + 1,
                                                    draws.end());
    }
    int correct = 0;
    for (int c = 0; c < proto.n_way; ++c) {
      for (const auto& utt : test_utts[static_cast<std::size_t>(c)]) {
        const VectorXd q = encoder.embed(
            crop_or_duplicate(features(utt), query_frames, rng));
        int best = 0;
        double best_score = cosine_similarity(q, enroll_embs[0]);
        for (int j = 1; j < proto.n_way; ++j) {
          const double s = cosine_similarity(q, enroll_embs[static_cast<std::size_t>(j)]);
          if (s > best_score) {  // ties keep the lowest enrolled index
            best_score = s;
            best = j;
          }
        }
        if (best == c) ++correct;
      }
    }
    accuracies.push_back(static_cast<double>(correct) /
                         (static_cast<double>(proto.n_way) * proto.test_per_spk));
  }

  IdentificationReport report;
  report.n_way = proto.n_way;
  report.query_seconds = proto.query_seconds;
  report.episodes = proto.episodes;
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(accuracies.size());
  report.mean_accuracy = mean;
  if (proto.episodes > 1) {
    double ss = 0.0;
    for (double a : accuracies) ss += (a - mean) * (a - mean);
    const double sd = std::sqrt(ss / static_cast<double>(proto.episodes - 1));
    report.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(proto.episodes));
  } else {
    report.ci95 = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

}  // namespace protosv
