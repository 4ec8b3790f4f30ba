#pragma once

#include <string>
#include <vector>

#include "mvr/synth/generate.hpp"

namespace mvr {

// On-disk scene format (.vgts), little-endian:
//   magic "VGTS" | u32 version | u64 seed | u32 array count
//   per array: u16 name length | name bytes | u8 dtype (0=f32, 1=f64, 2=u8)
//              | u8 ndim | u32 dims[ndim] | raw payload
// Geometry arrays are stored at f64 so that the exact-consistency identities
// survive a round trip; images and masks keep their compact dtypes. A read
// either yields a complete sample or throws (truncation and bad headers
// report the byte offset); read-after-write is bit-identical.
inline constexpr uint32_t kDatasetVersion = 1;

void write_sample(const std::string& path, const SceneSample& sample);
SceneSample read_sample(const std::string& path);

// Dataset directory layout: <dir>/manifest.txt plus <dir>/scenes/scene_<seed>.vgts.
// The manifest is line-based `key = value` text listing generation parameters
// and one seed entry per scene.
void write_dataset(const std::vector<SceneSample>& samples, const std::string& dir);
std::vector<SceneSample> read_dataset(const std::string& dir);

}  // namespace mvr
