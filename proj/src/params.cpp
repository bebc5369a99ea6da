// Copyright 2026 tts4p authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tts4p/params.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tts4p/bytes.hpp"

namespace tts4p::numerics {

using bytes::get_u16;
using bytes::get_u32;
using bytes::put_u16;
using bytes::put_u32;

Tensor<float>& ModelParams::add(const std::string& name, Tensor<float> value, Partition p) {
  if (name.empty()) throw std::invalid_argument("ModelParams::add: empty name");
  if (name.size() > 0xffff) throw std::invalid_argument("ModelParams::add: name too long");
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(value), p});
  if (!inserted) throw std::invalid_argument("ModelParams::add: duplicate name " + name);
  return it->second.value;
}

Tensor<float>& ModelParams::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ModelParams: no parameter " + name);
  return it->second.value;
}

const Tensor<float>& ModelParams::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ModelParams: no parameter " + name);
  return it->second.value;
}

Partition ModelParams::partition_of(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ModelParams: no parameter " + name);
  return it->second.partition;
}

std::vector<std::string> ModelParams::names(Partition p) const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_)
    if (e.partition == p) out.push_back(name);
  return out;
}

int64_t ModelParams::scalar_count() const {
  int64_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write("CKPT", 4);
  put_u32(os, 1u);
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, e] : params.entries()) {
    put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(e.partition));
    os.put(static_cast<char>(e.value.rank()));
    for (int d = 0; d < e.value.rank(); ++d) put_u32(os, static_cast<uint32_t>(e.value.dim(d)));
    for (int64_t i = 0; i < e.value.size(); ++i) {
      uint32_t bits;
      float v = e.value[i];
      std::memcpy(&bits, &v, 4);
      put_u32(os, bits);
    }
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CKPT", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint32_t version = get_u32(is);
  if (version != 1) throw std::runtime_error("load_checkpoint: unsupported version");
  uint32_t count = get_u32(is);
  ModelParams params;
  for (uint32_t t = 0; t < count; ++t) {
    uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    int tag = is.get();
    int rank = is.get();
    if (!is || tag < 0 || tag > 2 || rank < 0)
      throw std::runtime_error("load_checkpoint: corrupt entry in " + path);
    std::vector<int> dims(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) dims[static_cast<size_t>(d)] = static_cast<int>(get_u32(is));
    Tensor<float> value(dims);
    for (int64_t i = 0; i < value.size(); ++i) {
      uint32_t bits = get_u32(is);
      std::memcpy(&value[i], &bits, 4);
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    params.add(name, std::move(value), static_cast<Partition>(tag));
  }
  return params;
}

}  // namespace tts4p::numerics
