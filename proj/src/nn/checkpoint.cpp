// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hlab/common/error.hpp"

namespace hlab::nn {
namespace {

constexpr char kMagic[8] = {'H', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void Checkpoint::add(const std::string& name, const Shape& shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("checkpoint: " + name + " has " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  names.push_back(name);
  shapes.push_back(shape);
  arrays.push_back(std::move(values));
}

void Checkpoint::add_params(const NamedParams& params) {
  for (const auto& [name, t] : params) {
    add(name, t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  }
}

std::size_t Checkpoint::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

void Checkpoint::restore(const NamedParams& params) const {
  for (const auto& [name, t] : params) {
    const auto i = find(name);
    if (shapes[i] != t.shape()) {
      throw DataError("checkpoint: " + name + " stored as " + shape_str(shapes[i]) +
                      ", model expects " + shape_str(t.shape()));
    }
    Tensor dst = t;
    std::copy(arrays[i].begin(), arrays[i].end(), dst.mutable_values().begin());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json meta;
  meta["kind"] = ckpt.kind;
  meta["config"] = ckpt.config;
  meta["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    meta["tensors"].push_back({{"name", ckpt.names[i]}, {"shape", ckpt.shapes[i]}});
  }
  const std::string header = meta.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& a : ckpt.arrays) {
    os.write(reinterpret_cast<const char*>(a.data()),
             static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  if (!os.flush()) throw IoError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  const auto version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto len = read_u32(is);
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (!is) throw DataError("checkpoint: truncated header in " + path.string());
  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(header);
    ckpt.kind = meta.at("kind").get<std::string>();
    ckpt.config = meta.at("config");
    for (const auto& t : meta.at("tensors")) {
      ckpt.names.push_back(t.at("name").get<std::string>());
      ckpt.shapes.push_back(t.at("shape").get<Shape>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: malformed header: " + std::string(e.what()));
  }
  for (const auto& shape : ckpt.shapes) {
    std::vector<double> a(numel(shape));
    is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated data in " + path.string());
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

}  // namespace hlab::nn
