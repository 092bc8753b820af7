/* Copyright 2026 The kvsched Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "kvsched/engine.h"

namespace kvsched::cli {

// Everything a command needs: the simulation config plus where to write.
struct RunConfig {
  SimConfig sim;
  std::string output_dir = "out";
};

// Missing files (config, trace, samples) exit with this code.
inline constexpr int kExitMissingFile = 2;
inline constexpr int kExitBadInput = 1;

// Raised for a file that does not exist, so the caller can exit with 2.
class MissingFile : public InputError {
 public:
  explicit MissingFile(const std::filesystem::path& path)
      : InputError("file not found: " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Keys absent from the document keep their defaults; unknown keys and
// wrongly typed values raise InputError naming the dotted field path.
RunConfig parse_config(const nlohmann::ordered_json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Writes every field, so parse_config(to_json(c)) reproduces c.
nlohmann::ordered_json to_json(const RunConfig& cfg);

// The config every command starts from when no file is given.
RunConfig default_config();

}  // namespace kvsched::cli
