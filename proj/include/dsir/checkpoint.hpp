/* Copyright 2026 The dsir Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DSIR_CHECKPOINT_HPP
#define DSIR_CHECKPOINT_HPP

#include <string>
#include <utility>
#include <vector>

#include "dsir/tensor.hpp"

namespace dsir {

// Versioned binary parameter file. Layout, all little-endian:
//   magic "MASR", u32 version,
//   u32 metadata count, per entry: u32 key length, key bytes,
//                                  u32 value length, value bytes,
//   u32 parameter count, per parameter: u32 name length, name bytes,
//     u32 rank, u32 extents[rank], f32 data[prod(extents)].
struct Checkpoint {
  std::uint32_t version = 1;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::pair<std::string, Tensor>> params;

  const std::string* find_meta(const std::string& key) const;
  const Tensor* find_param(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsir

#endif  // DSIR_CHECKPOINT_HPP
