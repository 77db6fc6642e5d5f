// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlab/nn/layers.hpp"

namespace hlab::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named arrays plus free-form metadata. See docs/checkpoint_format.md.
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> arrays;

  void add(const std::string& name, const Shape& shape, std::vector<double> values);
  void add_params(const NamedParams& params);

  /// Index of `name`; throws DataError when absent.
  std::size_t find(const std::string& name) const;
  /// Copies stored values into `params` (names and shapes must match).
  void restore(const NamedParams& params) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hlab::nn
