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
#include "dsir/structural_net.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dsir/parallel.hpp"

namespace dsir {

namespace {

NeighbourhoodLayout make_layout(NeighbourhoodLayout::Kind kind, int scale) {
  NeighbourhoodLayout l;
  l.kind = kind;
  l.scale = scale;
  // offsets: +e0, -e0, +e1, -e1, +e2, -e2 (scaled)
  for (int axis = 0; axis < 3; ++axis) {
    std::array<int, 3> plus{0, 0, 0}, minus{0, 0, 0};
    plus[axis] = scale;
    minus[axis] = -scale;
    l.offsets[2 * axis] = plus;
    l.offsets[2 * axis + 1] = minus;
  }
  // all sign combinations on each axis pair; opposite pairs excluded
  int p = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int sa = 0; sa < 2; ++sa)
        for (int sb = 0; sb < 2; ++sb) l.pairs[p++] = {2 * a + sa, 2 * b + sb};
  return l;
}

}  // namespace

NeighbourhoodLayout NeighbourhoodLayout::direct() {
  return make_layout(Kind::direct, 1);
}
NeighbourhoodLayout NeighbourhoodLayout::dilated() {
  return make_layout(Kind::dilated, 2);
}

// --- DNS kernel ----------------------------------------------------------------

namespace {

inline void neighbour_indices(Dims dm, int i, int j, int k, int scale, std::int64_t out[6]) {
  const std::int64_t sw = dm.d;
  const std::int64_t sh = static_cast<std::int64_t>(dm.w) * dm.d;
  const int ip = std::min(i + scale, dm.h - 1), im = std::max(i - scale, 0);
  const int jp = std::min(j + scale, dm.w - 1), jm = std::max(j - scale, 0);
  const int kp = std::min(k + scale, dm.d - 1), km = std::max(k - scale, 0);
  const std::int64_t row = static_cast<std::int64_t>(i) * sh + static_cast<std::int64_t>(j) * sw + k;
  out[0] = row + static_cast<std::int64_t>(ip - i) * sh;
  out[1] = row + static_cast<std::int64_t>(im - i) * sh;
  out[2] = row + static_cast<std::int64_t>(jp - j) * sw;
  out[3] = row + static_cast<std::int64_t>(jm - j) * sw;
  out[4] = row + (kp - k);
  out[5] = row + (km - k);
}

// Writes the 12 self-similarity channels of one layout into the slice
// [.., k_offset .. k_offset+12) of a [C,H,W,D,k_total] buffer.
void dns_forward_layout(const real* h, real* out, std::int64_t channels, Dims dm,
                        const NeighbourhoodLayout& layout, std::int64_t k_total,
                        std::int64_t k_offset) {
  const std::int64_t plane = dm.voxels();
  parallel_chunks(plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t v = lo; v < hi; ++v) {
      const int k = static_cast<int>(v % dm.d);
      const int j = static_cast<int>((v / dm.d) % dm.w);
      const int i = static_cast<int>(v / (static_cast<std::int64_t>(dm.d) * dm.w));
      std::int64_t nb[6];
      neighbour_indices(dm, i, j, k, layout.scale, nb);
      for (std::int64_t c = 0; c < channels; ++c) {
        const real* hc = h + c * plane;
        real vals[6];
        for (int t = 0; t < 6; ++t) vals[t] = hc[nb[t]];
        real dist[12];
        real sum = 0;
        for (int p = 0; p < 12; ++p) {
          const real del = vals[layout.pairs[p][0]] - vals[layout.pairs[p][1]];
          dist[p] = del * del;
          sum += dist[p];
        }
        const real m = sum / 12;
        const real s2 = m > kDnsVarianceFloor ? m : kDnsVarianceFloor;
        const real inv = 1 / s2;
        real* o = out + (c * plane + v) * k_total + k_offset;
        for (int p = 0; p < 12; ++p) o[p] = std::exp(-dist[p] * inv);
      }
    }
  });
}

// Adjoint of dns_forward_layout. Accumulates into gh; parallel over
// feature channels because neighbouring voxels scatter into shared
// locations within a channel.
void dns_backward_layout(const real* h, const real* s_val, const real* gs, real* gh,
                         std::int64_t channels, Dims dm, const NeighbourhoodLayout& layout,
                         std::int64_t k_total, std::int64_t k_offset) {
  const std::int64_t plane = dm.voxels();
  parallel_chunks(channels, [&](std::int64_t clo, std::int64_t chi) {
    for (std::int64_t c = clo; c < chi; ++c) {
      const real* hc = h + c * plane;
      real* ghc = gh + c * plane;
      for (std::int64_t v = 0; v < plane; ++v) {
        const int k = static_cast<int>(v % dm.d);
        const int j = static_cast<int>((v / dm.d) % dm.w);
        const int i = static_cast<int>(v / (static_cast<std::int64_t>(dm.d) * dm.w));
        std::int64_t nb[6];
        neighbour_indices(dm, i, j, k, layout.scale, nb);
        real vals[6];
        for (int t = 0; t < 6; ++t) vals[t] = hc[nb[t]];
        real del[12], dist[12];
        real sum = 0;
        for (int p = 0; p < 12; ++p) {
          del[p] = vals[layout.pairs[p][0]] - vals[layout.pairs[p][1]];
          dist[p] = del[p] * del[p];
          sum += dist[p];
        }
        const real m = sum / 12;
        const bool var_active = m > kDnsVarianceFloor;
        const real s2 = var_active ? m : kDnsVarianceFloor;
        const real inv = 1 / s2;
        const std::int64_t base = (c * plane + v) * k_total + k_offset;
        real dot = 0;
        if (var_active) {
          for (int p = 0; p < 12; ++p) dot += gs[base + p] * s_val[base + p] * dist[p];
          dot *= inv * inv / 12;
        }
        for (int q = 0; q < 12; ++q) {
          const real vq = -gs[base + q] * s_val[base + q] * inv + dot;
          const real t = 2 * vq * del[q];
          ghc[nb[layout.pairs[q][0]]] += t;
          ghc[nb[layout.pairs[q][1]]] -= t;
        }
      }
    }
  });
}

Tensor dns_impl(const Tensor& features, const std::vector<NeighbourhoodLayout>& layouts) {
  if (features.shape().size() != 4)
    throw std::invalid_argument("dns: features must be [C,H,W,D]");
  if (!all_finite(features.value()))
    throw std::invalid_argument("dns: non-finite feature values");
  const std::int64_t channels = features.shape()[0];
  const Dims dm{static_cast<int>(features.shape()[1]), static_cast<int>(features.shape()[2]),
                static_cast<int>(features.shape()[3])};
  const std::int64_t k_total = 12 * static_cast<std::int64_t>(layouts.size());

  std::vector<real> out(static_cast<std::size_t>(features.numel() * k_total));
  for (std::size_t li = 0; li < layouts.size(); ++li)
    dns_forward_layout(features.value().data(), out.data(), channels, dm, layouts[li], k_total,
                       12 * static_cast<std::int64_t>(li));

  auto layouts_copy = std::make_shared<std::vector<NeighbourhoodLayout>>(layouts);
  return ops::make_result(
      {channels, dm.h, dm.w, dm.d, k_total}, std::move(out), {features.node()},
      [layouts_copy, channels, dm, k_total](TensorNode& self) {
        auto& ph = self.parents[0];
        if (!ph->requires_grad) return;
        ph->ensure_grad();
        for (std::size_t li = 0; li < layouts_copy->size(); ++li)
          dns_backward_layout(ph->value.data(), self.value.data(), self.grad.data(),
                              ph->grad.data(), channels, dm, (*layouts_copy)[li], k_total,
                              12 * static_cast<std::int64_t>(li));
      });
}

}  // namespace

Tensor dns(const Tensor& features, const NeighbourhoodLayout& layout) {
  return dns_impl(features, {layout});
}

Tensor dns_dual(const Tensor& features) {
  return dns_impl(features, {NeighbourhoodLayout::direct(), NeighbourhoodLayout::dilated()});
}

// --- network -------------------------------------------------------------------

namespace {

Tensor conv_tensor(std::int64_t co, std::int64_t ci, std::int64_t k, Rng& rng, real slope) {
  const real fan_in = static_cast<real>(ci * k * k * k);
  const real bound = std::sqrt(real(6) / ((1 + slope * slope) * fan_in));
  std::vector<real> w(static_cast<std::size_t>(co * ci * k * k * k));
  for (real& x : w) x = rng.uniform(-bound, bound);
  return Tensor::from_data({co, ci, k, k, k}, std::move(w), true);
}

}  // namespace

NetParams NetParams::random_init(const NetConfig& cfg, Rng& rng) {
  if (cfg.c_h < 1 || cfg.c_d < 1) throw std::invalid_argument("NetParams: bad channel counts");
  NetParams p;
  p.config = cfg;
  const auto& w = cfg.widths;
  const int in_ch[4] = {1, w[0], w[1], w[2]};
  for (int level = 0; level < 4; ++level) {
    p.enc_w.push_back(conv_tensor(w[level], in_ch[level], 3, rng, cfg.leaky_slope));
    p.enc_b.push_back(Tensor({w[level]}, 0, true));
  }
  // decoder consumes the upsampled coarse output concatenated with the skip
  const int dec_in[3] = {w[1] + w[0], w[2] + w[1], w[3] + w[2]};
  for (int level = 0; level < 3; ++level) {
    p.dec_w.push_back(conv_tensor(w[level], dec_in[level], 3, rng, cfg.leaky_slope));
    p.dec_b.push_back(Tensor({w[level]}, 0, true));
  }
  p.proj_w = conv_tensor(cfg.c_h, w[0], 1, rng, cfg.leaky_slope);
  p.proj_b = Tensor({cfg.c_h}, 0, true);
  {
    const real bound = std::sqrt(real(1) / cfg.c_h);
    std::vector<real> sw(static_cast<std::size_t>(cfg.c_h));
    for (real& x : sw) x = rng.uniform(-bound, bound);
    p.squeeze_w = Tensor::from_data({cfg.c_h}, std::move(sw), true);
    p.squeeze_b = Tensor({1}, 0, true);
  }
  p.head1_w = conv_tensor(kDescriptorChannels, kDescriptorChannels, 3, rng, cfg.leaky_slope);
  p.head1_b = Tensor({kDescriptorChannels}, 0, true);
  p.head2_w = conv_tensor(cfg.c_d, kDescriptorChannels, 3, rng, cfg.leaky_slope);
  p.head2_b = Tensor({cfg.c_d}, 0, true);
  return p;
}

NetParams NetParams::clone() const {
  NetParams copy;
  copy.config = config;
  auto dup = [](const Tensor& t) {
    return Tensor::from_data(t.shape(), t.value(), t.requires_grad());
  };
  for (const auto& t : enc_w) copy.enc_w.push_back(dup(t));
  for (const auto& t : enc_b) copy.enc_b.push_back(dup(t));
  for (const auto& t : dec_w) copy.dec_w.push_back(dup(t));
  for (const auto& t : dec_b) copy.dec_b.push_back(dup(t));
  copy.proj_w = dup(proj_w);
  copy.proj_b = dup(proj_b);
  copy.squeeze_w = dup(squeeze_w);
  copy.squeeze_b = dup(squeeze_b);
  copy.head1_w = dup(head1_w);
  copy.head1_b = dup(head1_b);
  copy.head2_w = dup(head2_w);
  copy.head2_b = dup(head2_b);
  return copy;
}

std::vector<std::pair<std::string, Tensor>> NetParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < enc_w.size(); ++i) {
    out.emplace_back("enc" + std::to_string(i) + ".weight", enc_w[i]);
    out.emplace_back("enc" + std::to_string(i) + ".bias", enc_b[i]);
  }
  for (std::size_t i = 0; i < dec_w.size(); ++i) {
    out.emplace_back("dec" + std::to_string(i) + ".weight", dec_w[i]);
    out.emplace_back("dec" + std::to_string(i) + ".bias", dec_b[i]);
  }
  out.emplace_back("proj.weight", proj_w);
  out.emplace_back("proj.bias", proj_b);
  out.emplace_back("squeeze.weight", squeeze_w);
  out.emplace_back("squeeze.bias", squeeze_b);
  out.emplace_back("head1.weight", head1_w);
  out.emplace_back("head1.bias", head1_b);
  out.emplace_back("head2.weight", head2_w);
  out.emplace_back("head2.bias", head2_b);
  return out;
}

std::vector<Tensor> NetParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void NetParams::set_requires_grad(bool b) {
  for (auto& t : tensors()) t.set_requires_grad(b);
}

void NetParams::zero_grads() {
  for (auto& t : tensors()) t.zero_grad();
}

Checkpoint NetParams::to_checkpoint() const {
  Checkpoint ckpt;
  std::ostringstream widths;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    if (i) widths << ',';
    widths << config.widths[i];
  }
  ckpt.metadata = {{"c_h", std::to_string(config.c_h)},
                   {"c_d", std::to_string(config.c_d)},
                   {"widths", widths.str()},
                   {"leaky_slope", std::to_string(config.leaky_slope)}};
  ckpt.params = named();
  return ckpt;
}

NetParams NetParams::from_checkpoint(const Checkpoint& ckpt) {
  NetConfig cfg;
  if (const auto* v = ckpt.find_meta("c_h")) cfg.c_h = std::stoi(*v);
  if (const auto* v = ckpt.find_meta("c_d")) cfg.c_d = std::stoi(*v);
  if (const auto* v = ckpt.find_meta("leaky_slope")) cfg.leaky_slope = std::stod(*v);
  if (const auto* v = ckpt.find_meta("widths")) {
    std::istringstream ss(*v);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',') && i < 4) cfg.widths[i++] = std::stoi(tok);
  }
  Rng rng(0);
  NetParams p = random_init(cfg, rng);
  for (auto& [name, t] : p.named()) {
    const Tensor* src = ckpt.find_param(name);
    if (!src) throw std::runtime_error("checkpoint: missing parameter " + name);
    if (src->shape() != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    t.value() = src->value();
  }
  return p;
}

Tensor extract_features(const Volume& image, const NetParams& params) {
  if (!image.dims.positive()) throw std::invalid_argument("extract_features: empty volume");
  if (!image.dims.divisible_by(8))
    throw std::invalid_argument("extract_features: dims must be divisible by 8");
  const NetConfig& cfg = params.config;
  const real slope = cfg.leaky_slope;

  Tensor x = Tensor::from_data({1, image.dims.h, image.dims.w, image.dims.d}, image.data);

  std::vector<Tensor> skips;
  Tensor cur = x;
  for (int level = 0; level < 4; ++level) {
    if (level > 0) cur = blurpool3d(cur);
    cur = leaky_relu(conv3d(cur, params.enc_w[level], params.enc_b[level]), slope);
    if (level < 3) skips.push_back(cur);
  }
  for (int level = 2; level >= 0; --level) {
    const auto& skip = skips[level];
    cur = trilinear_resize(cur, static_cast<int>(skip.shape()[1]),
                           static_cast<int>(skip.shape()[2]), static_cast<int>(skip.shape()[3]));
    cur = concat_channels(cur, skip);
    cur = leaky_relu(conv3d(cur, params.dec_w[level], params.dec_b[level]), slope);
  }
  return conv3d(cur, params.proj_w, params.proj_b);
}

Tensor squeeze(const Tensor& dns_map, const NetParams& params) {
  if (dns_map.shape().size() != 5 || dns_map.shape()[4] != kDescriptorChannels)
    throw std::invalid_argument("squeeze: input must be [C,H,W,D,24]");
  if (dns_map.shape()[0] != params.config.c_h)
    throw std::invalid_argument("squeeze: feature channel count mismatch");
  Tensor compact = collapse_channels(dns_map, params.squeeze_w, params.squeeze_b);
  Tensor hidden = leaky_relu(conv3d(compact, params.head1_w, params.head1_b),
                             params.config.leaky_slope);
  return conv3d(hidden, params.head2_w, params.head2_b);
}

Dsir net_forward(const Volume& image, const NetParams& params) {
  Tensor h = extract_features(image, params);
  Tensor s = dns_dual(h);
  return Dsir{squeeze(s, params)};
}

Field dsir_to_field(const Dsir& d, Spacing spacing) {
  Field f(d.channels(), d.dims(), spacing);
  f.data = d.t.value();
  return f;
}

}  // namespace dsir
