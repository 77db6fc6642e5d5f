// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/common/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "hlab/common/error.hpp"

namespace hlab {

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : root / p;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open " + path.string());
  Manifest m;
  m.root = path.parent_path();
  try {
    const auto doc = nlohmann::json::parse(is);
    if (!doc.is_array()) throw DataError("manifest: expected a JSON array in " + path.string());
    for (const auto& j : doc) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.wav_path = j.at("wav_path").get<std::string>();
      if (j.contains("clean_path")) e.clean_path = j["clean_path"].get<std::string>();
      if (j.contains("mos_raw")) e.mos_raw = j["mos_raw"].get<double>();
      e.split = j.at("split").get<std::string>();
      e.set_name = j.value("set_name", std::string());
      if (j.contains("degradation")) {
        e.kind = j["degradation"].value("kind", std::string());
        e.snr = j["degradation"].value("snr", 0.0);
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: malformed " + path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  auto doc = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json j;
    j["id"] = e.id;
    j["wav_path"] = e.wav_path.generic_string();
    if (e.clean_path) j["clean_path"] = e.clean_path->generic_string();
    if (e.mos_raw) j["mos_raw"] = *e.mos_raw;
    j["split"] = e.split;
    if (!e.set_name.empty()) j["set_name"] = e.set_name;
    j["degradation"] = {{"kind", e.kind}, {"snr", e.snr}};
    doc.push_back(std::move(j));
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("manifest: cannot write " + path.string());
  os << doc.dump(2) << "\n";
  if (!os.flush()) throw IoError("manifest: write failed for " + path.string());
}

}  // namespace hlab
