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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protosv/config.hpp"
#include "protosv/error.hpp"
#include "protosv/evaluator.hpp"
#include "protosv/synth.hpp"
#include "protosv/trainer.hpp"
#include "protosv/version.hpp"

namespace {

using json = nlohmann::json;
using namespace protosv;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot create file: " + tmp);
    out << text;
    if (!out) throw DataError("failed writing file: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// One RunManifest next to every artifact a run produces. The timestamp is
// the only field allowed to differ between identical reruns.
void write_run_manifest(const std::filesystem::path& path,
                        const std::string& subcommand, std::uint64_t seed,
                        const json& config,
                        const std::vector<std::string>& artifacts) {
  json j;
  j["subcommand"] = subcommand;
  j["tool_version"] = kVersion;
  j["seed"] = seed;
  j["config"] = config;
  j["artifacts"] = artifacts;
  j["created_utc"] = utc_now();
  write_atomic(path, j.dump(2) + "\n");
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string seconds_tag(const std::optional<double>& secs) {
  if (!secs) return "full";
  return fmt9(*secs) + "s";
}

struct CsvReport {
  std::string text = "metric,value,n,seed\n";
  void row(const std::string& metric, const std::string& value, long long n,
           std::uint64_t seed) {
    text += metric + "," + value + "," + std::to_string(n) + "," +
            std::to_string(seed) + "\n";
  }
};

// ----------------------------------------------------------- subcommands

int cmd_synth(const std::string& out_dir, int speakers, int utts,
              double min_seconds, double max_seconds, double noise,
              std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_speakers = speakers;
  spec.utterances_per_speaker = utts;
  spec.min_seconds = min_seconds;
  spec.max_seconds = max_seconds;
  spec.noise_level = noise;
  spec.seed = seed;
  spec.formant_sets = default_formant_sets(speakers, seed);
  const GenerateResult res = generate(spec, out_dir);
  std::cout << "wrote " << res.files_written << " files for " << speakers
            << " speakers under " << out_dir << "\n";
  write_run_manifest(std::filesystem::path(out_dir) / "run_manifest.json",
                     "synth", seed,
                     {{"speakers", speakers},
                      {"utterances_per_speaker", utts},
                      {"min_seconds", min_seconds},
                      {"max_seconds", max_seconds},
                      {"noise_level", noise}},
                     {out_dir});
  return 0;
}

int cmd_prepare(const std::string& audio_dir, const std::string& manifest_out) {
  const ScanResult res = scan_corpus(audio_dir);
  save_manifest(manifest_out, res.manifest);
  std::cout << "manifest: " << res.manifest.size() << " utterances, "
            << res.manifest.num_speakers() << " speakers";
  if (res.skipped > 0) std::cout << " (" << res.skipped << " files skipped)";
  std::cout << "\n";
  write_run_manifest(manifest_out + ".run.json", "prepare", 0,
                     {{"audio_dir", audio_dir}}, {manifest_out});
  return 0;
}

int cmd_split(const std::string& manifest_path, const std::string& train_out,
              const std::string& test_out, double fraction,
              std::uint64_t seed) {
  const Manifest m = load_manifest(manifest_path);
  const auto [train, test] = split_speakers(m, fraction, seed);
  save_manifest(train_out, train);
  save_manifest(test_out, test);
  std::cout << "split " << m.num_speakers() << " speakers into "
            << train.num_speakers() << " train / " << test.num_speakers()
            << " test\n";
  write_run_manifest(train_out + ".run.json", "split", seed,
                     {{"manifest", manifest_path},
                      {"train_fraction", fraction}},
                     {train_out, test_out});
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& train_path,
              const std::string& val_path, const std::string& out_dir,
              const std::string& mode_flag,
              const std::optional<std::uint64_t>& seed_flag) {
  TrainConfig cfg = load_train_config(config_path);
  if (!mode_flag.empty()) {
    cfg.mode = mode_from_name(mode_flag);
    cfg.loss.mode = cfg.mode;
  }
  if (seed_flag) cfg.seed = *seed_flag;

  const Manifest train_m = load_manifest(train_path);
  const Manifest val_m = load_manifest(val_path);
  const FitResult res = fit(train_m, val_m, cfg, out_dir);
  std::cout << "trained " << res.steps_run << " steps (mode "
            << mode_name(cfg.mode) << ")\n"
            << "best validation accuracy " << fmt9(res.best_val_accuracy)
            << "\nfinal checkpoint: " << res.final_checkpoint.string()
            << "\nbest checkpoint:  " << res.best_checkpoint.string() << "\n";
  write_run_manifest(std::filesystem::path(out_dir) / "run_manifest.json",
                     "train", cfg.seed,
                     {{"config_file", config_path},
                      {"resolved", format_train_config(cfg)},
                      {"train_manifest", train_path},
                      {"val_manifest", val_path}},
                     {res.final_checkpoint.string(),
                      res.best_checkpoint.string(),
                      res.metrics_csv.string()});
  return 0;
}

int cmd_trials(const std::string& manifest_path, const std::string& out,
               int pos_per_spk, int neg_per_spk, std::uint64_t seed) {
  const Manifest m = load_manifest(manifest_path);
  Rng rng = Rng(seed).split("trials");
  const TrialGenResult res = generate_trials(m, pos_per_spk, neg_per_spk, rng);
  save_trials(out, res.trials);
  const auto n_pos = static_cast<long long>(
      std::count_if(res.trials.begin(), res.trials.end(),
                    [](const Trial& t) { return t.label == 1; }));
  std::cout << "wrote " << res.trials.size() << " trials (" << n_pos
            << " target, " << res.trials.size() - n_pos << " nontarget)";
  if (res.skipped_speakers > 0)
    std::cout << "; skipped " << res.skipped_speakers
              << " single-utterance speakers";
  std::cout << "\n";
  write_run_manifest(out + ".run.json", "trials", seed,
                     {{"manifest", manifest_path},
                      {"pos_per_speaker", pos_per_spk},
                      {"neg_per_speaker", neg_per_spk}},
                     {out});
  return 0;
}

int cmd_eval_verification(const std::string& checkpoint,
                          const std::string& manifest_path,
                          const std::string& trials_path,
                          const std::vector<std::string>& test_seconds,
                          const std::string& out, std::uint64_t seed,
                          const std::string& cache_dir) {
  const LoadedModel model = load_model(checkpoint);
  const Manifest m = load_manifest(manifest_path);
  const auto trials = load_trials(trials_path);
  FeatureStore store(m, model.feature_cfg,
                     cache_dir.empty()
                         ? std::nullopt
                         : std::optional<std::filesystem::path>(cache_dir));

  CsvReport csv;
  std::printf("%-8s %8s %10s %10s %8s %8s\n", "test", "EER%", "threshold",
              "minDCF", "target", "nontgt");
  for (const auto& token : test_seconds) {
    std::optional<double> secs;
    if (token != "full") secs = std::stod(token);
    Rng rng = Rng(seed).split("crop:" + token);
    const VerificationReport rep =
        evaluate_verification(trials, m, store.source(), *model.encoder,
                              model.feature_cfg, secs, rng);
    const std::string tag = seconds_tag(secs);
    std::printf("%-8s %8.3f %10.4f %10.4f %8d %8d\n", tag.c_str(),
                100.0 * rep.eer, rep.eer_threshold, rep.min_dcf, rep.n_target,
                rep.n_nontarget);
    const long long n = rep.n_target + rep.n_nontarget;
    csv.row("eer_" + tag, fmt9(rep.eer), n, seed);
    csv.row("eer_threshold_" + tag, fmt9(rep.eer_threshold), n, seed);
    csv.row("min_dcf_" + tag, fmt9(rep.min_dcf), n, seed);
  }
  write_atomic(out, csv.text);
  write_run_manifest(out + ".run.json", "eval-verification", seed,
                     {{"checkpoint", checkpoint},
                      {"manifest", manifest_path},
                      {"trials", trials_path},
                      {"test_seconds", test_seconds}},
                     {out});
  return 0;
}

int cmd_eval_identification(const std::string& checkpoint,
                            const std::string& manifest_path,
                            const std::vector<int>& n_ways, int episodes,
                            double enroll_seconds, int test_per_spk,
                            double query_seconds, const std::string& out,
                            std::uint64_t seed, const std::string& cache_dir) {
  const LoadedModel model = load_model(checkpoint);
  const Manifest m = load_manifest(manifest_path);
  FeatureStore store(m, model.feature_cfg,
                     cache_dir.empty()
                         ? std::nullopt
                         : std::optional<std::filesystem::path>(cache_dir));

  CsvReport csv;
  std::printf("%-8s %10s %12s %10s\n", "n_way", "accuracy", "ci95", "episodes");
  for (int n_way : n_ways) {
    IdentificationProtocol proto;
    proto.n_way = n_way;
    proto.episodes = episodes;
    proto.enroll_seconds = enroll_seconds;
    proto.test_per_spk = test_per_spk;
    proto.query_seconds = query_seconds;
    Rng rng = Rng(seed).split("identification:" + std::to_string(n_way));
    const IdentificationReport rep = evaluate_identification(
        m, store.source(), *model.encoder, model.feature_cfg, proto, rng);
    const std::string tag =
        std::to_string(n_way) + "way_" + fmt9(query_seconds) + "s";
    const bool has_ci = episodes > 1;
    std::printf("%-8d %10.4f %12s %10d\n", n_way, rep.mean_accuracy,
                has_ci ? fmt9(rep.ci95).c_str() : "n/a", episodes);
    csv.row("acc_" + tag, fmt9(rep.mean_accuracy), episodes, seed);
    csv.row("ci95_" + tag, has_ci ? fmt9(rep.ci95) : "na", episodes, seed);
  }
  write_atomic(out, csv.text);
  write_run_manifest(out + ".run.json", "eval-identification", seed,
                     {{"checkpoint", checkpoint},
                      {"manifest", manifest_path},
                      {"episodes", episodes},
                      {"enroll_seconds", enroll_seconds},
                      {"test_per_spk", test_per_spk},
                      {"query_seconds", query_seconds}},
                     {out});
  return 0;
}

int cmd_dump_embeddings(const std::string& checkpoint,
                        const std::string& manifest_path,
                        const std::string& out, const std::string& cache_dir) {
  const LoadedModel model = load_model(checkpoint);
  const Manifest m = load_manifest(manifest_path);
  FeatureStore store(m, model.feature_cfg,
                     cache_dir.empty()
                         ? std::nullopt
                         : std::optional<std::filesystem::path>(cache_dir));
  const int written = dump_embeddings(
      m,
      [&](const UtteranceRecord& rec) {
        return model.encoder->embed(store.get(rec.utt_id));
      },
      out, model.encoder_cfg.embedding_dim);
  std::cout << "wrote " << written << " embeddings to " << out << "\n";
  write_run_manifest(out + ".run.json", "dump-embeddings", 0,
                     {{"checkpoint", checkpoint}, {"manifest", manifest_path}},
                     {out});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speaker-embedding training and evaluation toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_out;
  int synth_speakers = 20, synth_utts = 10;
  double synth_min = 3.0, synth_max = 8.0, synth_noise = 0.1;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out-dir", synth_out)->required();
  synth->add_option("--speakers", synth_speakers);
  synth->add_option("--utts-per-speaker", synth_utts);
  synth->add_option("--min-seconds", synth_min);
  synth->add_option("--max-seconds", synth_max);
  synth->add_option("--noise", synth_noise);
  synth->add_option("--seed", synth_seed);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "scan a corpus into a manifest");
  std::string prep_dir, prep_out;
  prepare->add_option("--audio-dir", prep_dir)->required();
  prepare->add_option("--manifest-out", prep_out)->required();

  // split
  auto* split = app.add_subcommand("split", "speaker-disjoint manifest split");
  std::string split_manifest, split_train, split_test;
  double split_fraction = 0.8;
  std::uint64_t split_seed = 1;
  split->add_option("--manifest", split_manifest)->required();
  split->add_option("--train-out", split_train)->required();
  split->add_option("--test-out", split_test)->required();
  split->add_option("--train-fraction", split_fraction);
  split->add_option("--seed", split_seed);

  // train
  auto* train = app.add_subcommand("train", "run the optimization loop");
  std::string train_config, train_train, train_val, train_out, train_mode;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config)->required();
  train->add_option("--train-manifest", train_train)->required();
  train->add_option("--val-manifest", train_val)->required();
  train->add_option("--out-dir", train_out)->required();
  train->add_option("--mode", train_mode)
      ->check(CLI::IsMember({"vanilla", "meta", "meta_global"}));
  train->add_option("--seed", train_seed);

  // trials
  auto* trials = app.add_subcommand("trials", "generate verification trials");
  std::string trials_manifest, trials_out;
  int trials_pos = 100, trials_neg = 100;
  std::uint64_t trials_seed = 1;
  trials->add_option("--manifest", trials_manifest)->required();
  trials->add_option("--out", trials_out)->required();
  trials->add_option("--pos-per-speaker", trials_pos);
  trials->add_option("--neg-per-speaker", trials_neg);
  trials->add_option("--seed", trials_seed);

  // eval-verification
  auto* everif = app.add_subcommand("eval-verification",
                                    "EER / minDCF over a trial list");
  std::string ev_ckpt, ev_manifest, ev_trials, ev_out, ev_cache;
  std::vector<std::string> ev_seconds = {"full"};
  std::uint64_t ev_seed = 1;
  everif->add_option("--checkpoint", ev_ckpt)->required();
  everif->add_option("--manifest", ev_manifest)->required();
  everif->add_option("--trials", ev_trials)->required();
  everif->add_option("--test-seconds", ev_seconds,
                     "durations in seconds, or 'full'")
      ->delimiter(',');
  everif->add_option("--out", ev_out)->required();
  everif->add_option("--seed", ev_seed);
  everif->add_option("--feature-cache-dir", ev_cache);

  // eval-identification
  auto* eid = app.add_subcommand("eval-identification",
                                 "N-way unseen-speaker identification");
  std::string ei_ckpt, ei_manifest, ei_out, ei_cache;
  std::vector<int> ei_nways = {5};
  int ei_episodes = 1000, ei_test_per_spk = 5;
  double ei_enroll = 5.0, ei_query = 1.0;
  std::uint64_t ei_seed = 1;
  eid->add_option("--checkpoint", ei_ckpt)->required();
  eid->add_option("--manifest", ei_manifest)->required();
  eid->add_option("--n-way", ei_nways)->delimiter(',');
  eid->add_option("--episodes", ei_episodes);
  eid->add_option("--enroll-seconds", ei_enroll);
  eid->add_option("--test-per-spk", ei_test_per_spk);
  eid->add_option("--query-seconds", ei_query);
  eid->add_option("--out", ei_out)->required();
  eid->add_option("--seed", ei_seed);
  eid->add_option("--feature-cache-dir", ei_cache);

  // dump-embeddings
  auto* dump = app.add_subcommand("dump-embeddings",
                                  "one embedding row per utterance");
  std::string du_ckpt, du_manifest, du_out, du_cache;
  dump->add_option("--checkpoint", du_ckpt)->required();
  dump->add_option("--manifest", du_manifest)->required();
  dump->add_option("--out", du_out)->required();
  dump->add_option("--feature-cache-dir", du_cache);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_speakers, synth_utts, synth_min,
                       synth_max, synth_noise, synth_seed);
    if (prepare->parsed()) return cmd_prepare(prep_dir, prep_out);
    if (split->parsed())
      return cmd_split(split_manifest, split_train, split_test, split_fraction,
                       split_seed);
    if (train->parsed())
      return cmd_train(train_config, train_train, train_val, train_out,
                       train_mode, train_seed);
    if (trials->parsed())
      return cmd_trials(trials_manifest, trials_out, trials_pos, trials_neg,
                        trials_seed);
    if (everif->parsed())
      return cmd_eval_verification(ev_ckpt, ev_manifest, ev_trials, ev_seconds,
                                   ev_out, ev_seed, ev_cache);
    if (eid->parsed())
      return cmd_eval_identification(ei_ckpt, ei_manifest, ei_nways,
                                     ei_episodes, ei_enroll, ei_test_per_spk,
                                     ei_query, ei_out, ei_seed, ei_cache);
    if (dump->parsed())
      return cmd_dump_embeddings(du_ckpt, du_manifest, du_out, du_cache);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
