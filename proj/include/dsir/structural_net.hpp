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
#ifndef DSIR_STRUCTURAL_NET_HPP
#define DSIR_STRUCTURAL_NET_HPP

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "dsir/checkpoint.hpp"
#include "dsir/rng.hpp"
#include "dsir/tensor.hpp"
#include "dsir/volume.hpp"

namespace dsir {

// Six axis-aligned neighbour offsets and the twelve unordered pairs of
// offsets on different axes (the sqrt(2)-distance pairs; the three
// opposite pairs are excluded). `scale` is 1 for the direct layout and
// 2 for the dilated one.
struct NeighbourhoodLayout {
  enum class Kind { direct, dilated };

  Kind kind = Kind::direct;
  int scale = 1;
  std::array<std::array<int, 3>, 6> offsets{};
  std::array<std::array<int, 2>, 12> pairs{};  // indices into offsets

  static NeighbourhoodLayout direct();
  static NeighbourhoodLayout dilated();
};

inline constexpr int kDescriptorChannels = 24;  // 12 pairs x 2 layouts

struct NetConfig {
  int c_h = 16;                             // feature channels
  int c_d = kDescriptorChannels;            // representation channels
  std::array<int, 4> widths{8, 16, 32, 64};  // encoder widths, decoder mirrored
  real leaky_slope = 0.2;
};

// All learnable tensors of the representation network: a 4-level
// encoder-decoder with skip connections, the channel-collapse weights,
// and the two-layer convolution head.
struct NetParams {
  NetConfig config;
  std::vector<Tensor> enc_w, enc_b;  // one conv per encoder level
  std::vector<Tensor> dec_w, dec_b;  // one conv per decoder level
  Tensor proj_w, proj_b;             // 1x1x1 conv to c_h channels
  Tensor squeeze_w, squeeze_b;       // [c_h] weights + scalar bias
  Tensor head1_w, head1_b;           // 3x3x3 conv, 24 -> 24
  Tensor head2_w, head2_b;           // 3x3x3 conv, 24 -> c_d

  static NetParams random_init(const NetConfig& cfg, Rng& rng);

  // Deep copy with fresh storage (tensor handles otherwise share nodes).
  NetParams clone() const;

  // Stable (name, tensor) view used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  void set_requires_grad(bool b);
  void zero_grads();

  Checkpoint to_checkpoint() const;
  static NetParams from_checkpoint(const Checkpoint& ckpt);
};

// Per-voxel structural representation D, stored channel-major
// [C_d,H,W,D]; the logical layout is H x W x D x C_d (channels last on
// disk and in exported fields).
struct Dsir {
  Tensor t;

  int channels() const { return static_cast<int>(t.shape()[0]); }
  Dims dims() const {
    return {static_cast<int>(t.shape()[1]), static_cast<int>(t.shape()[2]),
            static_cast<int>(t.shape()[3])};
  }
};

// Resolution-preserving feature extraction; input must be normalised to
// [0,1] with all dims divisible by 8. Returns [c_h,H,W,D].
Tensor extract_features(const Volume& image, const NetParams& params);

// Deep neighbourhood self-similarity over one layout: one channel per
// offset pair, value exp(-d / sigma^2) with d the squared feature
// difference of the pair and sigma^2 the per-voxel per-channel mean of
// the twelve pair distances, floored at 1e-6. Output [C,H,W,D,12],
// values in (0,1], replication padding at borders.
Tensor dns(const Tensor& features, const NeighbourhoodLayout& layout);

// Direct and dilated layouts concatenated on the descriptor axis:
// [C,H,W,D,24], channels 0-11 direct, 12-23 dilated.
Tensor dns_dual(const Tensor& features);

// Collapse the feature-channel axis with the learned weights, then run
// the two-layer convolution head. [C,H,W,D,24] -> [c_d,H,W,D].
Tensor squeeze(const Tensor& dns_map, const NetParams& params);

// extract_features -> dns_dual -> squeeze.
Dsir net_forward(const Volume& image, const NetParams& params);

// Detached copy as a plain multi-channel field for registration and
// evaluation code.
Field dsir_to_field(const Dsir& d, Spacing spacing = {});

inline constexpr real kDnsVarianceFloor = 1e-6;

}  // namespace dsir

#endif  // DSIR_STRUCTURAL_NET_HPP
