#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fundascreen/tensornet/network.hpp"

namespace fundascreen::nn {

// Binary layout, little-endian throughout:
//   "FSCK" | u32 version | u32 array count |
//   per array: u32 name length, name bytes, u32 rank, u64 dims[rank],
//              f64 values[prod(dims)] (row-major)
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kEmaPrefix = "ema/";

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in, const std::string& source);
Checkpoint read_checkpoint_file(const std::string& path);

// Network parameters plus their EMA shadows (stored under "ema/").
Checkpoint make_checkpoint(const Network& net, const std::vector<std::vector<double>>& ema_shadow);

// Copies either the raw or the EMA arrays into the network's parameters.
void load_parameters(Network& net, const Checkpoint& ckpt, bool use_ema);

}  // namespace fundascreen::nn
