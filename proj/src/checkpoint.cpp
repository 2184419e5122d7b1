#include "lfsr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "lfsr/errors.hpp"

namespace lfsr {

namespace {

constexpr char kMagic[8] = {'L', 'F', 'S', 'R', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::string& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

}  // namespace

nn::UNet<float> Checkpoint::network() const {
  nn::UNet<float> net(spec);
  if (net.params().size() != params.size()) throw FormatError("checkpoint parameter count does not match its spec");
  net.params() = params;
  return net;
}

Checkpoint make_checkpoint(const nn::UNet<float>& net, std::string kind, LabelTable labels, bool frozen) {
  Checkpoint c;
  c.kind = std::move(kind);
  c.spec = net.spec();
  c.labels = std::move(labels);
  c.frozen = frozen;
  c.params = net.params();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const nn::UNet<float> net = ckpt.network();
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& e : ckpt.labels) labels.push_back({{"id", e.id}, {"name", e.name}});
  const nlohmann::json header = {
      {"kind", ckpt.kind},
      {"frozen", ckpt.frozen},
      {"levels", ckpt.spec.levels},
      {"layers", ckpt.spec.layers},
      {"base_filters", ckpt.spec.base_filters},
      {"in_channels", ckpt.spec.in_channels},
      {"out_channels", ckpt.spec.out_channels},
      {"head", ckpt.spec.head == nn::Head::Softmax ? "softmax" : "linear"},
      {"parameter_count", ckpt.params.size()},
      {"labels", labels}};
  const std::string htext = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(htext.size()));
  out += htext;
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.path.size()));
    out += l.path;
    put<std::uint64_t>(out, l.count());
    for (std::size_t n = 0; n < l.count(); ++n) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(ckpt.params[l.offset + n]));
  }
  put<std::uint32_t>(out, crc(out, out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 12 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  {
    Reader tail(buf);
    tail.bytes(buf.size() - 4);
    if (tail.get<std::uint32_t>() != crc(buf, buf.size() - 4)) throw FormatError("checkpoint checksum mismatch");
  }
  Reader r(buf);
  r.bytes(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = r.get<std::uint32_t>();
  Checkpoint c;
  try {
    const auto h = nlohmann::json::parse(r.bytes(hlen));
    c.kind = h.at("kind").get<std::string>();
    c.frozen = h.at("frozen").get<bool>();
    c.spec.levels = h.at("levels").get<int>();
    c.spec.layers = h.at("layers").get<int>();
    c.spec.base_filters = h.at("base_filters").get<int>();
    c.spec.in_channels = h.at("in_channels").get<int>();
    c.spec.out_channels = h.at("out_channels").get<int>();
    c.spec.head = h.at("head").get<std::string>() == "softmax" ? nn::Head::Softmax : nn::Head::Linear;
    for (const auto& e : h.at("labels")) c.labels.push_back({e.at("id").get<std::int32_t>(), e.at("name").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  try {
    c.spec.validate();
  } catch (const SpecError& e) {
    throw FormatError(std::string("bad checkpoint spec: ") + e.what());
  }
  const nn::UNet<float> shape(c.spec);
  c.params.resize(shape.params().size());
  for (const auto& l : shape.layers()) {
    const auto plen = r.get<std::uint32_t>();
    const std::string name = r.bytes(plen);
    const auto count = r.get<std::uint64_t>();
    if (name != l.path || count != l.count())
      throw FormatError("checkpoint block \"" + name + "\" does not match layer \"" + l.path + "\"");
    for (std::size_t n = 0; n < count; ++n) c.params[l.offset + n] = std::bit_cast<float>(r.get<std::uint32_t>());
  }
  if (r.pos() != buf.size() - 4) throw FormatError("trailing bytes in checkpoint");
  return c;
}

}  // namespace lfsr
