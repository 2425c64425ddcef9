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
#include <string>

#include "protosv/trainer.hpp"

namespace protosv {

// Sectioned key-value text with [features], [episode], [encoder], [loss] and
// [train] sections; keys are named exactly after the config fields. Unknown
// sections or keys are ConfigErrors. Missing keys keep their defaults.
TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config(const std::string& text,
                               const std::string& origin);

// The resolved config in the same format (also the RunManifest snapshot).
std::string format_train_config(const TrainConfig& cfg);

}  // namespace protosv
