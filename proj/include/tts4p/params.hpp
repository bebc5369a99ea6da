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

#ifndef TTS4P_PARAMS_HPP_
#define TTS4P_PARAMS_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tts4p/tape.hpp"
#include "tts4p/tensor.hpp"

namespace tts4p::numerics {

enum class Partition : uint8_t {
  kEncoder = 0,
  kAuxDecoder = 1,
  kFinetuneDecoder = 2,
};

// Named float32 parameter collection. Iteration order is the sorted name
// order, so optimizer walks and serialization are deterministic.
class ModelParams {
 public:
  struct Entry {
    Tensor<float> value;
    Partition partition = Partition::kEncoder;
  };

  Tensor<float>& add(const std::string& name, Tensor<float> value, Partition p);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor<float>& at(const std::string& name);
  const Tensor<float>& at(const std::string& name) const;
  Partition partition_of(const std::string& name) const;
  size_t size() const { return entries_.size(); }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::vector<std::string> names(Partition p) const;
  int64_t scalar_count() const;

 private:
  std::map<std::string, Entry> entries_;
};

// Binary container: magic "CKPT", u32 version, u32 count, then per tensor a
// u16 name length, the name bytes, u8 partition tag, u8 rank, u32 dims and
// float32 payload. All integers and floats little-endian.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Places every parameter on the tape as a leaf. Partitions listed in
// `trainable` require gradients; everything else becomes a constant.
template <typename T>
std::map<std::string, typename Tape<T>::Var> params_on_tape(
    Tape<T>& tape, const ModelParams& params, const std::vector<Partition>& trainable) {
  std::map<std::string, typename Tape<T>::Var> out;
  for (const auto& [name, entry] : params.entries()) {
    const bool grad =
        std::find(trainable.begin(), trainable.end(), entry.partition) != trainable.end();
    out[name] = tape.leaf(entry.value.template cast<T>(), grad);
  }
  return out;
}

}  // namespace tts4p::numerics

#endif  // TTS4P_PARAMS_HPP_
