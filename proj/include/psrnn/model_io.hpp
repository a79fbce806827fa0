#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include "psrnn/network.hpp"
#include "psrnn/psrnn_plus.hpp"

namespace psrnn {

inline constexpr char kModelMagic[8] = {'P', 'S', 'R', 'N', 'N', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

/// Decoded contents of a model file.
struct ModelFile {
  std::uint32_t version = kModelVersion;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> params;

  const std::string& kind() const {
    const auto it = config.find("kind");
    if (it == config.end()) throw FormatError("model file has no 'kind' record");
    return it->second;
  }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

inline std::vector<std::uint8_t> encode_model(const ModelFile& m) {
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, m.version);
  std::string text;
  for (const auto& [k, v] : m.config) text += k + "=" + v + "\n";
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : m.params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape().extents()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  std::size_t remaining() const { return n_ - pos_; }
  const std::uint8_t* take(std::size_t k) {
    if (k > remaining()) throw IntegrityError("model file truncated");
    const auto* r = p_ + pos_;
    pos_ += k;
    return r;
  }
  std::uint32_t u32() {
    const auto* b = take(4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }
  std::string str(std::size_t k) {
    const auto* b = take(k);
    return std::string(reinterpret_cast<const char*>(b), k);
  }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline ModelFile decode_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kModelMagic || std::memcmp(bytes.data(), kModelMagic, sizeof kModelMagic) != 0) {
    if (bytes.size() < sizeof kModelMagic &&
        std::memcmp(bytes.data(), kModelMagic, bytes.size()) == 0)
      throw IntegrityError("model file truncated");
    throw FormatError("not a model file (bad magic)");
  }
  if (bytes.size() < sizeof kModelMagic + 12) throw IntegrityError("model file truncated");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.data() + body, 4);
  if (tail.u32() != crc32_of(bytes.data(), body)) throw IntegrityError("model file checksum mismatch");

  Reader r(bytes.data() + sizeof kModelMagic, body - sizeof kModelMagic);
  ModelFile m;
  m.version = r.u32();
  if (m.version != kModelVersion)
    throw VersionError("unsupported model file version " + std::to_string(m.version) + " (expected " +
                       std::to_string(kModelVersion) + ")");
  const std::string text = r.str(r.u32());
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed config record '" + line + "'");
    m.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  while (r.remaining() > 0) {
    std::string name = r.str(r.u32());
    const std::size_t rank = *r.take(1);
    std::vector<std::size_t> ext(rank);
    for (auto& e : ext) e = r.u32();
    Shape shape{std::span<const std::size_t>(ext)};
    std::vector<float> data(shape.elements());
    for (auto& v : data) v = std::bit_cast<float>(r.u32());
    m.params.emplace_back(std::move(name), Tensor(shape, std::move(data)));
  }
  return m;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write to '" + path.string() + "' failed");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <class Params>
void assign_params(const ModelFile& m, Params&& dest) {
  if (dest.size() != m.params.size())
    throw FormatError("model file holds " + std::to_string(m.params.size()) + " tensors, architecture expects " +
                      std::to_string(dest.size()));
  for (std::size_t i = 0; i < dest.size(); ++i) {
    const auto& [name, t] = m.params[i];
    if (name != dest[i].first) throw FormatError("model file tensor '" + name + "' where '" + dest[i].first + "' expected");
    if (!(t.shape() == dest[i].second->shape()))
      throw FormatError("model file tensor '" + name + "' has shape " + t.shape().str() + ", expected " +
                        dest[i].second->shape().str());
    *dest[i].second = t;
  }
}

template <class Named>
std::vector<std::pair<std::string, Tensor>> snapshot(const Named& named) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : named) out.emplace_back(name, *t);
  return out;
}

}  // namespace detail

inline ModelFile read_model_file(const std::filesystem::path& path) { return detail::decode_model(detail::read_bytes(path)); }

inline void save_model(const PsRnnNetwork<float>& net, const std::filesystem::path& path) {
  ModelFile m;
  m.config = net.config().to_kv();
  m.config["kind"] = "psrnn";
  m.params = detail::snapshot(net.named_parameters());
  detail::write_bytes(path, detail::encode_model(m));
}

inline void save_model(const PsRnnPlus<float>& net, const std::filesystem::path& path) {
  ModelFile m;
  m.config = net.to_kv();
  m.config["kind"] = "psrnn_plus";
  m.params = detail::snapshot(net.all_parameters());
  detail::write_bytes(path, detail::encode_model(m));
}

inline PsRnnNetwork<float> network_from_file(const ModelFile& m) {
  if (m.kind() != "psrnn") throw ConfigError("model kind '" + m.kind() + "' is not a per-size PS-RNN network");
  auto kv = m.config;
  kv.erase("kind");
  PsRnnNetwork<float> net(NetworkConfig::from_kv(kv));
  detail::assign_params(m, net.named_parameters());
  return net;
}

inline PsRnnPlus<float> plus_from_file(const ModelFile& m) {
  if (m.kind() != "psrnn_plus") throw ConfigError("model kind '" + m.kind() + "' is not a PS-RNN+ composite");
  auto net = PsRnnPlus<float>::from_kv(m.config);
  detail::assign_params(m, net.all_parameters());
  return net;
}

/// Loads a per-size network; with `expected_n` set, a model trained for a
/// different block size is rejected.
inline PsRnnNetwork<float> load_model(const std::filesystem::path& path,
                                      std::optional<std::size_t> expected_n = std::nullopt) {
  auto net = network_from_file(read_model_file(path));
  if (expected_n && net.pu_size() != *expected_n)
    throw ConfigError("model '" + path.string() + "' is for " + std::to_string(net.pu_size()) + "x" +
                      std::to_string(net.pu_size()) + " blocks, pipeline expects " + std::to_string(*expected_n) +
                      "x" + std::to_string(*expected_n));
  return net;
}

inline PsRnnPlus<float> load_plus_model(const std::filesystem::path& path) {
  return plus_from_file(read_model_file(path));
}

}  // namespace psrnn
