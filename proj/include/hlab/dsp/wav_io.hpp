// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hlab/dsp/waveform.hpp"

namespace hlab::dsp {

// 16-bit PCM, mono, little-endian RIFF. Only 16 kHz is accepted on read.
// Samples are scaled by 32767 in both directions, so a write/read round trip
// is within half an LSB for inputs in [-1, 1].

Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

std::vector<std::uint8_t> encode_wav(const Waveform& wave);
Waveform decode_wav(const std::vector<std::uint8_t>& bytes);

}  // namespace hlab::dsp
