// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hlab {

/// One clip in a corpus manifest. Paths are stored relative to the manifest
/// file and resolved against `Manifest::root` on load.
struct ManifestEntry {
  std::string id;
  std::filesystem::path wav_path;
  std::optional<std::filesystem::path> clean_path;
  std::optional<double> mos_raw;
  std::string split;
  std::string set_name;
  std::string kind;  // degradation kind
  double snr = 0.0;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& name) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Reads a JSON array of entries; throws IoError/DataError.
Manifest load_manifest(const std::filesystem::path& path);
/// Writes entries with paths relative to the manifest's directory.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace hlab
