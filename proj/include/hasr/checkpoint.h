#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hasr/tensor.h"

namespace hasr {

// Parameter container. Layout (all integers little-endian):
//
//   u8      version (1)
//   char[4] "HCKP"
//   u32     metadata byte length, then UTF-8 metadata (JSON)
//   u32     entry count
//   entry*  u16 name length, name bytes, u8 dtype (0 = f64, 1 = f32),
//           u8 rank, u32 extent[rank]
//   arrays  raw little-endian values, entries in manifest order
inline constexpr unsigned char kCheckpointVersion = 1;

enum class Dtype : unsigned char { kFloat64 = 0, kFloat32 = 1 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> entries;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                      Dtype dtype = Dtype::kFloat64);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& ckpt, Dtype dtype = Dtype::kFloat64);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace hasr
