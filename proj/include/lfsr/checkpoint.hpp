#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lfsr/unet.hpp"
#include "lfsr/volume.hpp"

namespace lfsr {

/// Binary parameter container:
///   "LFSRCKPT" | u32 version | u32 header length | JSON header
///   | per layer: u32 path length, path, u64 count, count x float32
///   | u32 CRC-32 of all preceding bytes.
/// Integers and floats are little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;  // "synthesis" or "segmentation"
  nn::UNetSpec spec;
  LabelTable labels;  // segmentation networks only
  bool frozen = false;
  std::vector<float> params;

  nn::UNet<float> network() const;
};

Checkpoint make_checkpoint(const nn::UNet<float>& net, std::string kind, LabelTable labels = {}, bool frozen = false);

/// Throws IoError on write failure.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws IoError for unreadable files and FormatError for a bad magic,
/// unsupported version, checksum mismatch or inconsistent layer blocks.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lfsr
