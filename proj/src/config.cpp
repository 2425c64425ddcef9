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

#include "protosv/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "protosv/error.hpp"

namespace protosv {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  return out;
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  std::int64_t out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(static_cast<int>(parse_int(trim(item), key)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text,
                               const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  bool encoder_n_mels_set = false;

  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where =
        origin + ":" + std::to_string(lineno);

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + ": malformed section header");
      section = line.substr(1, line.size() - 2);
      if (section != "features" && section != "episode" &&
          section != "encoder" && section != "loss" && section != "train")
        throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError(where + ": key '" + key + "' outside any section");

    if (section == "features") {
      auto& f = cfg.features;
      if (key == "n_mels") f.n_mels = static_cast<int>(parse_int(value, key));
      else if (key == "win_ms") f.win_ms = parse_double(value, key);
      else if (key == "hop_ms") f.hop_ms = parse_double(value, key);
      else if (key == "sample_rate") f.sample_rate = static_cast<int>(parse_int(value, key));
      else if (key == "log_floor") f.log_floor = parse_double(value, key);
      else if (key == "fft_size") f.fft_size = static_cast<int>(parse_int(value, key));
      else if (key == "fmin_hz") f.fmin_hz = parse_double(value, key);
      else if (key == "fmax_hz") f.fmax_hz = parse_double(value, key);
      else if (key == "pre_emphasis") f.pre_emphasis = parse_bool(value, key);
      else if (key == "dither") f.dither = parse_bool(value, key);
      else throw ConfigError(where + ": unknown key '" + key + "' in [features]");
    } else if (section == "episode") {
      auto& e = cfg.episode;
      if (key == "n_way") e.n_way = static_cast<int>(parse_int(value, key));
      else if (key == "k_shot") e.k_shot = static_cast<int>(parse_int(value, key));
      else if (key == "m_query") e.m_query = static_cast<int>(parse_int(value, key));
      else if (key == "support_seconds") e.support_seconds = parse_double(value, key);
      else if (key == "query_seconds_min") e.query_seconds_min = parse_double(value, key);
      else if (key == "query_seconds_max") e.query_seconds_max = parse_double(value, key);
      else throw ConfigError(where + ": unknown key '" + key + "' in [episode]");
    } else if (section == "encoder") {
      auto& enc = cfg.encoder;
      if (key == "arch") enc.arch = arch_from_name(value);
      else if (key == "channel_widths") enc.channel_widths = parse_int_list(value, key);
      else if (key == "embedding_dim") enc.embedding_dim = static_cast<int>(parse_int(value, key));
      else if (key == "n_mels") {
        enc.n_mels = static_cast<int>(parse_int(value, key));
        encoder_n_mels_set = true;
      } else throw ConfigError(where + ": unknown key '" + key + "' in [encoder]");
    } else if (section == "loss") {
      if (key == "lambda") cfg.loss.lambda = parse_double(value, key);
      else if (key == "mode") {
        cfg.loss.mode = mode_from_name(value);
        cfg.mode = cfg.loss.mode;
      } else throw ConfigError(where + ": unknown key '" + key + "' in [loss]");
    } else {  // [train]
      if (key == "optimizer") cfg.optimizer = value;
      else if (key == "momentum") cfg.momentum = parse_double(value, key);
      else if (key == "weight_decay") cfg.weight_decay = parse_double(value, key);
      else if (key == "lr_init") cfg.lr_init = parse_double(value, key);
      else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_double(value, key);
      else if (key == "lr_decay_rule") cfg.lr_decay_rule = value;
      else if (key == "max_steps") cfg.max_steps = parse_int(value, key);
      else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int(value, key);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
      else if (key == "mode") {
        cfg.mode = mode_from_name(value);
        cfg.loss.mode = cfg.mode;
      } else if (key == "eval_interval") cfg.eval_interval = parse_int(value, key);
      else if (key == "plateau_patience") cfg.plateau_patience = static_cast<int>(parse_int(value, key));
      else if (key == "val_episodes") cfg.val_episodes = static_cast<int>(parse_int(value, key));
      else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(value, key));
      else if (key == "vanilla_seconds") cfg.vanilla_seconds = parse_double(value, key);
      else throw ConfigError(where + ": unknown key '" + key + "' in [train]");
    }
  }
  if (!encoder_n_mels_set) cfg.encoder.n_mels = cfg.features.n_mels;
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.filename().string());
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  out << "[features]\n"
      << "n_mels = " << cfg.features.n_mels << "\n"
      << "win_ms = " << num(cfg.features.win_ms) << "\n"
      << "hop_ms = " << num(cfg.features.hop_ms) << "\n"
      << "sample_rate = " << cfg.features.sample_rate << "\n"
      << "log_floor = " << num(cfg.features.log_floor) << "\n"
      << "fft_size = " << cfg.features.fft_size << "\n"
      << "fmin_hz = " << num(cfg.features.fmin_hz) << "\n"
      << "fmax_hz = " << num(cfg.features.fmax_hz) << "\n"
      << "pre_emphasis = " << (cfg.features.pre_emphasis ? "true" : "false") << "\n"
      << "dither = " << (cfg.features.dither ? "true" : "false") << "\n\n";
  out << "[episode]\n"
      << "n_way = " << cfg.episode.n_way << "\n"
      << "k_shot = " << cfg.episode.k_shot << "\n"
      << "m_query = " << cfg.episode.m_query << "\n"
      << "support_seconds = " << num(cfg.episode.support_seconds) << "\n"
      << "query_seconds_min = " << num(cfg.episode.query_seconds_min) << "\n"
      << "query_seconds_max = " << num(cfg.episode.query_seconds_max) << "\n\n";
  out << "[encoder]\n"
      << "arch = " << arch_name(cfg.encoder.arch) << "\n"
      << "channel_widths = ";
  for (std::size_t i = 0; i < cfg.encoder.channel_widths.size(); ++i)
    out << (i ? "," : "") << cfg.encoder.channel_widths[i];
  out << "\n"
      << "embedding_dim = " << cfg.encoder.embedding_dim << "\n"
      << "n_mels = " << cfg.encoder.n_mels << "\n\n";
  out << "[loss]\n"
      << "lambda = " << num(cfg.loss.lambda) << "\n"
      << "mode = " << mode_name(cfg.mode) << "\n\n";
  out << "[train]\n"
      << "optimizer = " << cfg.optimizer << "\n"
      << "momentum = " << num(cfg.momentum) << "\n"
      << "weight_decay = " << num(cfg.weight_decay) << "\n"
      << "lr_init = " << num(cfg.lr_init) << "\n"
      << "lr_decay_factor = " << num(cfg.lr_decay_factor) << "\n"
      << "lr_decay_rule = " << cfg.lr_decay_rule << "\n"
      << "max_steps = " << cfg.max_steps << "\n"
      << "checkpoint_every = " << cfg.checkpoint_every << "\n"
      << "seed = " << cfg.seed << "\n"
      << "mode = " << mode_name(cfg.mode) << "\n"
      << "eval_interval = " << cfg.eval_interval << "\n"
      << "plateau_patience = " << cfg.plateau_patience << "\n"
      << "val_episodes = " << cfg.val_episodes << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "vanilla_seconds = " << num(cfg.vanilla_seconds) << "\n";
  return out.str();
}

}  // namespace protosv
