#include "lfsr/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "lfsr/errors.hpp"

namespace lfsr::io {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kSingleFileOffset = 352;

// Field offsets in the 348-byte NIfTI-1 header.
constexpr int kOffDim = 40;
constexpr int kOffDatatype = 70;
constexpr int kOffBitpix = 72;
constexpr int kOffPixdim = 76;
constexpr int kOffVoxOffset = 108;
constexpr int kOffSclSlope = 112;
constexpr int kOffSclInter = 116;
constexpr int kOffXyztUnits = 123;
constexpr int kOffQformCode = 252;
constexpr int kOffSformCode = 254;
constexpr int kOffSrowX = 280;
constexpr int kOffMagic = 344;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_gz(const std::filesystem::path& p) { return ends_with(p.string(), ".gz"); }

struct GzCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// gzread reads plain files transparently, so one path handles .nii and .nii.gz.
std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("file not found: " + path.string());
  GzHandle f(gzopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes;
  std::array<unsigned char, 1 << 16> buf;
  for (;;) {
    const int n = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) throw IoError("read error (corrupt compressed stream?) in " + path.string());
    if (n == 0) break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
  }
  return bytes;
}

template <typename T>
T load_swapped(const unsigned char* p, bool swap) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if (swap) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

class HeaderReader {
 public:
  HeaderReader(const unsigned char* p, bool swap) : p_(p), swap_(swap) {}

  template <typename T>
  T get(int offset) const {
    return load_swapped<T>(p_ + offset, swap_);
  }

 private:
  const unsigned char* p_;
  bool swap_;
};

template <typename T>
void put(std::vector<unsigned char>& h, int offset, T v) {
  static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
  std::memcpy(h.data() + offset, &v, sizeof(T));
}

int bytes_per_voxel(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::UInt8: return 1;
    case NiftiDatatype::Int16: return 2;
    case NiftiDatatype::Int32: return 4;
    case NiftiDatatype::Float32: return 4;
  }
  return 0;
}

NiftiDatatype checked_datatype(std::int16_t code) {
  switch (code) {
    case 2: return NiftiDatatype::UInt8;
    case 4: return NiftiDatatype::Int16;
    case 8: return NiftiDatatype::Int32;
    case 16: return NiftiDatatype::Float32;
    default: throw FormatError("unsupported NIfTI datatype code " + std::to_string(code));
  }
}

std::vector<double> decode(const unsigned char* p, std::size_t count, NiftiDatatype dt, bool swap) {
  std::vector<double> out(count);
  const int bpv = bytes_per_voxel(dt);
  for (std::size_t n = 0; n < count; ++n) {
    const unsigned char* q = p + n * bpv;
    switch (dt) {
      case NiftiDatatype::UInt8: out[n] = *q; break;
      case NiftiDatatype::Int16: out[n] = load_swapped<std::int16_t>(q, swap); break;
      case NiftiDatatype::Int32: out[n] = load_swapped<std::int32_t>(q, swap); break;
      case NiftiDatatype::Float32: out[n] = load_swapped<float>(q, swap); break;
    }
  }
  return out;
}

std::vector<unsigned char> encode(const std::vector<double>& values, NiftiDatatype dt) {
  const int bpv = bytes_per_voxel(dt);
  std::vector<unsigned char> out(values.size() * bpv);
  for (std::size_t n = 0; n < values.size(); ++n) {
    unsigned char* q = out.data() + n * bpv;
    switch (dt) {
      case NiftiDatatype::UInt8: *q = static_cast<std::uint8_t>(values[n]); break;
      case NiftiDatatype::Int16: {
        auto v = static_cast<std::int16_t>(values[n]);
        std::memcpy(q, &v, 2);
        break;
      }
      case NiftiDatatype::Int32: {
        auto v = static_cast<std::int32_t>(values[n]);
        std::memcpy(q, &v, 4);
        break;
      }
      case NiftiDatatype::Float32: {
        auto v = static_cast<float>(values[n]);
        std::memcpy(q, &v, 4);
        break;
      }
    }
  }
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& header,
                 const std::vector<unsigned char>& payload) {
  if (is_gz(path)) {
    GzHandle f(gzopen(path.string().c_str(), "wb6"));
    if (!f) throw IoError("cannot write " + path.string());
    if (gzwrite(f.get(), header.data(), static_cast<unsigned>(header.size())) != static_cast<int>(header.size()) ||
        (!payload.empty() &&
         gzwrite(f.get(), payload.data(), static_cast<unsigned>(payload.size())) != static_cast<int>(payload.size())))
      throw IoError("write failed for " + path.string());
    return;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace

NiftiImage read_nifti_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize))
    throw IoError("truncated NIfTI header in " + path.string());

  bool swap = false;
  if (load_swapped<std::int32_t>(bytes.data(), false) != kHeaderSize) {
    if (load_swapped<std::int32_t>(bytes.data(), true) != kHeaderSize)
      throw FormatError("not a NIfTI-1 file: " + path.string());
    swap = true;
  }

  const std::string magic(reinterpret_cast<const char*>(bytes.data()) + kOffMagic, 3);
  if (magic != "n+1" && magic != "ni1") throw FormatError("bad NIfTI magic in " + path.string());

  const HeaderReader h(bytes.data(), swap);
  NiftiImage img;
  auto& hdr = img.header;

  const auto ndim = h.get<std::int16_t>(kOffDim);
  if (ndim < 1 || ndim > 7) throw FormatError("invalid dim[0] in " + path.string());
  for (int a = 0; a < 3; ++a) hdr.dims[a] = a < ndim ? h.get<std::int16_t>(kOffDim + 2 * (a + 1)) : 1;
  for (int a = 3; a < ndim; ++a)
    if (h.get<std::int16_t>(kOffDim + 2 * (a + 1)) > 1)
      throw FormatError("only 3D images are supported: " + path.string());
  for (int a = 0; a < 3; ++a)
    if (hdr.dims[a] < 1) throw FormatError("non-positive dimension in " + path.string());

  hdr.datatype = checked_datatype(h.get<std::int16_t>(kOffDatatype));
  for (int a = 0; a < 3; ++a) hdr.spacing[a] = std::abs(h.get<float>(kOffPixdim + 4 * (a + 1)));
  hdr.scl_slope = h.get<float>(kOffSclSlope);
  hdr.scl_inter = h.get<float>(kOffSclInter);
  if (!std::isfinite(hdr.scl_slope)) hdr.scl_slope = 0.0;
  if (!std::isfinite(hdr.scl_inter)) hdr.scl_inter = 0.0;

  const auto qform = h.get<std::int16_t>(kOffQformCode);
  const auto sform = h.get<std::int16_t>(kOffSformCode);
  if (sform > 0) {
    std::array<double, 16> m{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m[4 * r + c] = h.get<float>(kOffSrowX + 16 * r + 4 * c);
    m[15] = 1.0;
    hdr.affine = AffineTransform(m);
  } else if (qform > 0) {
    throw FormatError("qform-only orientation is not supported (sform required): " + path.string());
  } else {
    hdr.affine = AffineTransform::scaling(hdr.spacing);
  }
  for (int a = 0; a < 3; ++a)
    if (!(hdr.spacing[a] > 0.0)) hdr.spacing[a] = 1.0;

  const std::size_t count = static_cast<std::size_t>(hdr.dims[0]) * hdr.dims[1] * hdr.dims[2];
  const std::size_t payload = count * bytes_per_voxel(hdr.datatype);

  std::vector<double> raw;
  if (magic == "n+1") {
    const auto vox_offset = static_cast<std::size_t>(h.get<float>(kOffVoxOffset));
    const std::size_t offset = std::max<std::size_t>(vox_offset, kSingleFileOffset);
    if (bytes.size() < offset + payload) throw IoError("truncated NIfTI data in " + path.string());
    raw = decode(bytes.data() + offset, count, hdr.datatype, swap);
  } else {
    auto img_path = path;
    std::string s = img_path.string();
    if (ends_with(s, ".hdr.gz")) s.replace(s.size() - 7, 7, ".img.gz");
    else if (ends_with(s, ".hdr")) s.replace(s.size() - 4, 4, ".img");
    else throw FormatError("paired NIfTI header must end in .hdr: " + path.string());
    const auto data = read_all(s);
    const auto offset = static_cast<std::size_t>(h.get<float>(kOffVoxOffset));
    if (data.size() < offset + payload) throw IoError("truncated NIfTI data in " + s);
    raw = decode(data.data() + offset, count, hdr.datatype, swap);
  }

  if (hdr.scl_slope != 0.0) {
    for (double& v : raw) v = v * hdr.scl_slope + hdr.scl_inter;
  }
  for (double v : raw)
    if (!std::isfinite(v)) throw FormatError("non-finite voxel values in " + path.string());
  img.data = std::move(raw);
  return img;
}

namespace {

Grid grid_of(const NiftiHeaderSubset& h) {
  Grid g{h.dims, h.spacing, h.affine};
  g.validate();
  return g;
}

bool is_identity_scaling(const NiftiHeaderSubset& h) {
  return h.scl_slope == 0.0 || (h.scl_slope == 1.0 && h.scl_inter == 0.0);
}

}  // namespace

std::variant<Volume, LabelVolume> read_nifti(const std::filesystem::path& path) {
  auto img = read_nifti_image(path);
  if (img.header.datatype == NiftiDatatype::Int32 && is_identity_scaling(img.header)) {
    std::vector<std::int32_t> labels(img.data.begin(), img.data.end());
    for (auto l : labels)
      if (l < 0) return Volume(grid_of(img.header), std::move(img.data));
    auto table = default_label_table(labels);
    return LabelVolume(grid_of(img.header), std::move(labels), std::move(table));
  }
  return Volume(grid_of(img.header), std::move(img.data));
}

Volume read_volume(const std::filesystem::path& path) {
  auto img = read_nifti_image(path);
  return Volume(grid_of(img.header), std::move(img.data));
}

LabelVolume read_label_volume(const std::filesystem::path& path, const std::optional<LabelTable>& table) {
  auto img = read_nifti_image(path);
  std::vector<std::int32_t> labels(img.data.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const double v = img.data[n];
    if (v < 0 || v != std::floor(v)) throw FormatError("label file holds non-integer or negative values: " + path.string());
    labels[n] = static_cast<std::int32_t>(v);
  }
  LabelTable t = table ? *table : default_label_table(labels);
  return LabelVolume(grid_of(img.header), std::move(labels), std::move(t));
}

void write_nifti_raw(const NiftiHeaderSubset& hd, const std::vector<double>& raw, const std::filesystem::path& path) {
  const std::size_t count = static_cast<std::size_t>(hd.dims[0]) * hd.dims[1] * hd.dims[2];
  if (raw.size() != count) throw ShapeError("NIfTI payload length does not match dims");
  std::vector<unsigned char> h(kSingleFileOffset, 0);
  put<std::int32_t>(h, 0, kHeaderSize);
  put<std::int16_t>(h, kOffDim, 3);
  for (int a = 0; a < 3; ++a) put<std::int16_t>(h, kOffDim + 2 * (a + 1), static_cast<std::int16_t>(hd.dims[a]));
  for (int a = 3; a < 7; ++a) put<std::int16_t>(h, kOffDim + 2 * (a + 1), 1);
  put<std::int16_t>(h, kOffDatatype, static_cast<std::int16_t>(hd.datatype));
  put<std::int16_t>(h, kOffBitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(hd.datatype)));
  put<float>(h, kOffPixdim, 1.0f);
  for (int a = 0; a < 3; ++a) put<float>(h, kOffPixdim + 4 * (a + 1), static_cast<float>(hd.spacing[a]));
  put<float>(h, kOffVoxOffset, static_cast<float>(kSingleFileOffset));
  put<float>(h, kOffSclSlope, static_cast<float>(hd.scl_slope));
  put<float>(h, kOffSclInter, static_cast<float>(hd.scl_inter));
  h[kOffXyztUnits] = 2 | 8;  // mm, s
  put<std::int16_t>(h, kOffQformCode, 0);
  put<std::int16_t>(h, kOffSformCode, 1);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) put<float>(h, kOffSrowX + 16 * r + 4 * c, static_cast<float>(hd.affine(r, c)));
  std::memcpy(h.data() + kOffMagic, "n+1\0", 4);
  write_bytes(path, h, encode(raw, hd.datatype));
}

void write_nifti(const Volume& v, const std::filesystem::path& path) {
  NiftiHeaderSubset hd{v.dims(), v.grid().spacing, v.grid().affine, NiftiDatatype::Float32, 1.0, 0.0};
  write_nifti_raw(hd, std::vector<double>(v.data().begin(), v.data().end()), path);
}

void write_nifti(const LabelVolume& v, const std::filesystem::path& path) {
  NiftiHeaderSubset hd{v.dims(), v.grid().spacing, v.grid().affine, NiftiDatatype::Int32, 0.0, 0.0};
  write_nifti_raw(hd, std::vector<double>(v.labels().begin(), v.labels().end()), path);
}

}  // namespace lfsr::io
