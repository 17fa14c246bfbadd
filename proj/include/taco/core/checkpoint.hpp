// Copyright 2026 The tacorl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Parameter checkpoints: "TACO" magic, u32 version, then named blocks of
// (u32 name length, name bytes, u32 rank, u32 dims..., float64 payload),
// all little-endian, repeated until end of file.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "taco/core/adam.hpp"
#include "taco/core/tensor.hpp"

namespace taco {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what)
      : std::runtime_error(what) {}
};

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("truncated checkpoint: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

struct CheckpointBlock {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

inline void write_blocks(std::ostream& os,
                         const std::vector<CheckpointBlock>& blocks) {
  for (const CheckpointBlock& b : blocks) {
    detail::put_u32(os, static_cast<uint32_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    detail::put_u32(os, static_cast<uint32_t>(b.shape.size()));
    for (const int d : b.shape) detail::put_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(b.values.data()),
             static_cast<std::streamsize>(b.values.size() * sizeof(double)));
  }
}

inline void save_checkpoint(const std::string& path,
                            const std::vector<CheckpointBlock>& blocks) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for write: " + path);
  os.write("TACO", 4);
  detail::put_u32(os, kCheckpointVersion);
  write_blocks(os, blocks);
  if (!os) throw CheckpointError("write failed: " + path);
}

inline void save_checkpoint(const std::string& path, const ParamList& params) {
  std::vector<CheckpointBlock> blocks;
  blocks.reserve(params.size());
  for (const NamedParam& p : params)
    blocks.push_back({p.name, p.tensor.shape(), p.tensor.value()});
  save_checkpoint(path, blocks);
}

inline std::vector<CheckpointBlock> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TACO", 4) != 0)
    throw CheckpointError("bad checkpoint magic in " + path);
  const uint32_t version = detail::get_u32(is, path);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + " in " + path);
  std::vector<CheckpointBlock> blocks;
  for (;;) {
    if (is.peek() == std::char_traits<char>::eof()) break;
    const uint32_t name_len = detail::get_u32(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = detail::get_u32(is, path);
    Shape shape(rank);
    size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(detail::get_u32(is, path));
      count *= static_cast<size_t>(shape[i]);
    }
    std::vector<double> values(count);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw CheckpointError("truncated checkpoint: " + path);
    blocks.push_back({std::move(name), std::move(shape), std::move(values)});
  }
  return blocks;
}

// Loads values into an existing parameter list; every parameter must be
// present with a matching shape.
inline void load_into(ParamList& params, const std::string& path) {
  const std::vector<CheckpointBlock> blocks = load_checkpoint(path);
  std::map<std::string, const CheckpointBlock*> by_name;
  for (const CheckpointBlock& b : blocks) by_name[b.name] = &b;
  for (NamedParam& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw CheckpointError("parameter '" + p.name + "' missing from " + path);
    if (it->second->shape != p.tensor.shape())
      throw CheckpointError("parameter '" + p.name + "' has shape " +
                            shape_str(it->second->shape) + " in " + path +
                            ", expected " + shape_str(p.tensor.shape()));
    p.tensor.raw_value() = it->second->values;
  }
}

}  // namespace taco
