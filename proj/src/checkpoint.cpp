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
#include "dsir/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dsir {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialisation assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'A', 'S', 'R'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint32_t len = read_u32(is);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return &v;
  return nullptr;
}

const Tensor* Checkpoint::find_param(const std::string& name) const {
  for (const auto& [k, t] : params)
    if (k == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, ckpt.version);
  write_u32(os, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    write_string(os, k);
    write_string(os, v);
  }
  write_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (const auto e : t.shape()) write_u32(os, static_cast<std::uint32_t>(e));
    std::vector<float> buf(t.value().size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.value()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(4 * buf.size()));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  Checkpoint ckpt;
  ckpt.version = read_u32(is);
  if (ckpt.version != 1) throw std::runtime_error("checkpoint: unsupported version");
  const std::uint32_t n_meta = read_u32(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_string(is);
    std::string v = read_string(is);
    ckpt.metadata.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t n_params = read_u32(is);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = read_string(is);
    const std::uint32_t rank = read_u32(is);
    if (rank > 5) throw std::runtime_error("checkpoint: parameter rank > 5");
    std::vector<std::int64_t> shape;
    std::int64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t e = read_u32(is);
      shape.push_back(static_cast<std::int64_t>(e));
      numel *= e;
    }
    std::vector<float> buf(static_cast<std::size_t>(numel));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(4 * buf.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated parameter data");
    std::vector<real> data(buf.begin(), buf.end());
    ckpt.params.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return ckpt;
}

}  // namespace dsir
