#include "fundascreen/tensornet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fundascreen/error.hpp"

namespace fundascreen::nn {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) fail(ErrorCode::parse, source + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write("FSCK", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) put<std::uint64_t>(out, d);
    for (double v : a.values) put<double>(out, v);
  }
}

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  write_checkpoint(out, ckpt);
  if (!out) fail(ErrorCode::io, "write failed for " + path);
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "FSCK", 4) != 0) fail(ErrorCode::parse, source + ": bad checkpoint magic");
  const auto version = get<std::uint32_t>(in, source);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::unsupported, source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, source);
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const auto name_len = get<std::uint32_t>(in, source);
    if (name_len > 4096) fail(ErrorCode::parse, source + ": implausible array name length");
    a.name.resize(name_len);
    in.read(a.name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) fail(ErrorCode::parse, source + ": truncated checkpoint");
    const auto rank = get<std::uint32_t>(in, source);
    if (rank > 8) fail(ErrorCode::parse, source + ": implausible rank for " + a.name);
    std::uint64_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.dims.push_back(get<std::uint64_t>(in, source));
      total *= a.dims.back();
    }
    if (total > (1ULL << 32)) fail(ErrorCode::parse, source + ": implausible size for " + a.name);
    a.values.resize(total);
    for (auto& v : a.values) v = get<double>(in, source);
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::missing_input, "cannot open checkpoint " + path);
  return read_checkpoint(in, path);
}

Checkpoint make_checkpoint(const Network& net, const std::vector<std::vector<double>>& ema_shadow) {
  const auto params = net.parameters();
  if (!ema_shadow.empty() && ema_shadow.size() != params.size()) {
    fail(ErrorCode::shape_mismatch, "checkpoint: EMA shadow count differs from parameter count");
  }
  Checkpoint ckpt;
  for (const auto* p : params) {
    ckpt.arrays.push_back(NamedArray{p->name, {p->dims.begin(), p->dims.end()}, p->value});
  }
  for (std::size_t i = 0; i < ema_shadow.size(); ++i) {
    ckpt.arrays.push_back(NamedArray{kEmaPrefix + params[i]->name, {params[i]->dims.begin(), params[i]->dims.end()}, ema_shadow[i]});
  }
  return ckpt;
}

void load_parameters(Network& net, const Checkpoint& ckpt, bool use_ema) {
  for (auto* p : net.parameters()) {
    const std::string name = use_ema ? kEmaPrefix + p->name : p->name;
    const auto* a = ckpt.find(name);
    if (!a) fail(ErrorCode::parse, "checkpoint lacks array '" + name + "'");
    if (a->values.size() != p->value.size() || !std::equal(a->dims.begin(), a->dims.end(), p->dims.begin(), p->dims.end())) {
      fail(ErrorCode::shape_mismatch, "checkpoint array '" + name + "' has the wrong shape");
    }
    p->value = a->values;
  }
}

}  // namespace fundascreen::nn
