#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "lfsr/volume.hpp"

namespace lfsr::io {

enum class NiftiDatatype : std::int16_t { UInt8 = 2, Int16 = 4, Int32 = 8, Float32 = 16 };

/// The part of a NIfTI-1 header this library interprets.
struct NiftiHeaderSubset {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1, 1, 1};
  AffineTransform affine;  // from srow_x/y/z
  NiftiDatatype datatype = NiftiDatatype::Float32;
  double scl_slope = 0.0;  // 0 means "no scaling"
  double scl_inter = 0.0;
};

struct NiftiImage {
  NiftiHeaderSubset header;
  std::vector<double> data;  // scaled by scl_slope/scl_inter when slope != 0
};

/// Reads a single-file (.nii, .nii.gz, magic "n+1") or paired (.hdr/.img,
/// magic "ni1") NIfTI-1 image. Orientation comes from the sform; files that
/// carry only a qform are rejected.
NiftiImage read_nifti_image(const std::filesystem::path& path);

/// int32 files without scaling load as label volumes, everything else as
/// scalar volumes.
std::variant<Volume, LabelVolume> read_nifti(const std::filesystem::path& path);

Volume read_volume(const std::filesystem::path& path);
/// Label table defaults to the distinct labels found in the file.
LabelVolume read_label_volume(const std::filesystem::path& path,
                              const std::optional<LabelTable>& table = std::nullopt);

/// Writes float32 (.nii or .nii.gz by extension). Output bytes depend only on
/// the volume.
void write_nifti(const Volume& v, const std::filesystem::path& path);
/// Writes int32 labels.
void write_nifti(const LabelVolume& v, const std::filesystem::path& path);

/// Raw writer used by tests to produce other datatypes and scalings.
void write_nifti_raw(const NiftiHeaderSubset& header, const std::vector<double>& raw_values,
                     const std::filesystem::path& path);

}  // namespace lfsr::io
