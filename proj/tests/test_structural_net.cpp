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
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "dsir/structural_net.hpp"
#include "support.hpp"

using namespace dsir;

namespace {

// Literal re-statement of the self-similarity definition, evaluated
// pair by pair with explicit coordinate clamping. Independent of the
// production kernel.
std::vector<real> dns_oracle(const Tensor& h, const NeighbourhoodLayout& layout) {
  const std::int64_t channels = h.shape()[0];
  const int H = static_cast<int>(h.shape()[1]);
  const int W = static_cast<int>(h.shape()[2]);
  const int D = static_cast<int>(h.shape()[3]);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W * D;
  auto value_at = [&](std::int64_t c, int i, int j, int k) {
    i = std::clamp(i, 0, H - 1);
    j = std::clamp(j, 0, W - 1);
    k = std::clamp(k, 0, D - 1);
    return h.value()[c * plane + (static_cast<std::int64_t>(i) * W + j) * D + k];
  };
  std::vector<real> out(static_cast<std::size_t>(channels * plane * 12));
  for (std::int64_t c = 0; c < channels; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int k = 0; k < D; ++k) {
          real dist[12];
          real mean = 0;
          for (int p = 0; p < 12; ++p) {
            const auto& oa = layout.offsets[layout.pairs[p][0]];
            const auto& ob = layout.offsets[layout.pairs[p][1]];
            const real va = value_at(c, i + oa[0], j + oa[1], k + oa[2]);
            const real vb = value_at(c, i + ob[0], j + ob[1], k + ob[2]);
            dist[p] = (va - vb) * (va - vb);
            mean += dist[p] / 12;
          }
          const real s2 = std::max(mean, real(1e-6));
          const std::int64_t v = (static_cast<std::int64_t>(i) * W + j) * D + k;
          for (int p = 0; p < 12; ++p)
            out[(c * plane + v) * 12 + p] = std::exp(-dist[p] / s2);
        }
  return out;
}

NetParams tiny_params(int c_h, Rng& rng) {
  NetConfig cfg;
  cfg.c_h = c_h;
  cfg.widths = {2, 3, 4, 5};
  return NetParams::random_init(cfg, rng);
}

}  // namespace

TEST_CASE("neighbourhood layouts: offsets, pairs, scales") {
  const auto direct = NeighbourhoodLayout::direct();
  const auto dilated = NeighbourhoodLayout::dilated();
  CHECK(direct.offsets.size() == 6);
  CHECK(direct.pairs.size() == 12);
  CHECK(direct.scale == 1);
  CHECK(dilated.scale == 2);
  // no pair joins opposite offsets; every pair sits at distance sqrt(2)*scale
  for (const auto& pr : direct.pairs) {
    const auto& a = direct.offsets[pr[0]];
    const auto& b = direct.offsets[pr[1]];
    int dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    CHECK(dot == 0);
    const int d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]);
    CHECK(d2 == 2);
  }
}

TEST_CASE("dns: constant features give all ones via the variance floor") {
  Tensor h({3, 4, 4, 4}, 0.6, false);
  Tensor s = dns(h, NeighbourhoodLayout::direct());
  CHECK(s.shape() == std::vector<std::int64_t>{3, 4, 4, 4, 12});
  for (const real v : s.value()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dns: hand-derived mixed-distance voxel") {
  // Six neighbour values around the centre of a 3x3x3 block: +1/-1 on
  // axis 0, zeros elsewhere. The eight pairs touching axis 0 have
  // squared distance 1, the four axis-1/axis-2 pairs have 0, so the
  // noise estimate is 2/3 and the channels are exp(-1.5) or 1.
  Tensor q({1, 3, 3, 3}, 0, false);
  q.value()[(2 * 3 + 1) * 3 + 1] = 1.0;   // +e0
  q.value()[(0 * 3 + 1) * 3 + 1] = -1.0;  // -e0
  Tensor s = dns(q, NeighbourhoodLayout::direct());
  const auto layout = NeighbourhoodLayout::direct();
  const std::int64_t centre = (1 * 3 + 1) * 3 + 1;
  for (int p = 0; p < 12; ++p) {
    const bool touches_axis0 = layout.pairs[p][0] < 2 || layout.pairs[p][1] < 2;
    const real expect = touches_axis0 ? std::exp(-1.5) : 1.0;
    CHECK(s.value()[centre * 12 + p] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("dns matches the brute-force oracle on random inputs") {
  Rng rng(42);
  for (const int scale_case : {0, 1}) {
    const auto layout = scale_case == 0 ? NeighbourhoodLayout::direct()
                                        : NeighbourhoodLayout::dilated();
    Tensor h = test::random_tensor({4, 5, 5, 5}, rng, -1, 1, false);
    Tensor s = dns(h, layout);
    const auto oracle = dns_oracle(h, layout);
    real worst = 0;
    for (std::size_t i = 0; i < oracle.size(); ++i)
      worst = std::max(worst, std::abs(s.value()[i] - oracle[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("dns_dual: shape, ordering, all-ones on constants") {
  Rng rng(43);
  Tensor h = test::random_tensor({4, 8, 8, 8}, rng, -1, 1, false);
  Tensor dual = dns_dual(h);
  CHECK(dual.shape() == std::vector<std::int64_t>{4, 8, 8, 8, 24});

  Tensor direct = dns(h, NeighbourhoodLayout::direct());
  Tensor dilated = dns(h, NeighbourhoodLayout::dilated());
  const std::int64_t cells = h.numel();
  for (std::int64_t cv = 0; cv < cells; ++cv)
    for (int p = 0; p < 12; ++p) {
      CHECK(dual.value()[cv * 24 + p] == direct.value()[cv * 12 + p]);
      CHECK(dual.value()[cv * 24 + 12 + p] == dilated.value()[cv * 12 + p]);
    }

  Tensor c({2, 4, 4, 4}, -3.5, false);
  Tensor dc = dns_dual(c);
  for (const real v : dc.value()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dns: translation equivariance away from borders") {
  Rng rng(44);
  const int n = 8;
  Tensor h = test::random_tensor({2, n, n, n}, rng, -1, 1, false);
  // shifted copy along axis 0 (row 0 stays stale, excluded below)
  Tensor hs({2, n, n, n}, 0, false);
  for (int c = 0; c < 2; ++c)
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          hs.value()[((static_cast<std::int64_t>(c) * n + i) * n + j) * n + k] =
              h.value()[((static_cast<std::int64_t>(c) * n + (i - 1)) * n + j) * n + k];
  Tensor s = dns_dual(h);
  Tensor ss = dns_dual(hs);
  // interior means both voxels keep the dilated (+-2) neighbourhood off
  // the borders and off the stale shifted-in row
  for (int c = 0; c < 2; ++c)
    for (int i = 2; i <= 4; ++i)
      for (int j = 2; j <= 5; ++j)
        for (int k = 2; k <= 5; ++k)
          for (int p = 0; p < 24; ++p) {
            const std::int64_t a =
                (((static_cast<std::int64_t>(c) * n + i) * n + j) * n + k) * 24 + p;
            const std::int64_t b =
                (((static_cast<std::int64_t>(c) * n + i + 1) * n + j) * n + k) * 24 + p;
            CHECK(ss.value()[b] == doctest::Approx(s.value()[a]).epsilon(1e-12));
          }
}

TEST_CASE("dns: finite-difference gradient") {
  Rng rng(45);
  Tensor h = test::random_tensor({2, 4, 4, 4}, rng, -1, 1, true);
  Tensor probe = test::random_tensor({2, 4, 4, 4, 24}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(dns_dual(h), probe)); };
  CHECK(test::gradient_check(h, loss_fn) < 1e-4);
}

TEST_CASE("extract_features: shape contract, determinism, bad dims") {
  Rng rng(46);
  NetParams params = tiny_params(6, rng);
  Volume img = test::random_volume({16, 16, 16}, rng);
  NoGradGuard ng;
  Tensor h1 = extract_features(img, params);
  CHECK(h1.shape() == std::vector<std::int64_t>{6, 16, 16, 16});
  Tensor h2 = extract_features(img, params);
  for (std::size_t i = 0; i < h1.value().size(); ++i)
    CHECK(h1.value()[i] == h2.value()[i]);

  Volume bad({12, 16, 16});
  CHECK_THROWS_AS(extract_features(bad, params), std::invalid_argument);
}

TEST_CASE("squeeze: constructed identity path averages the channels") {
  Rng rng(47);
  NetParams params = tiny_params(4, rng);
  // weights 1/C_h, zero bias, identity impulse head kernels
  std::fill(params.squeeze_w.value().begin(), params.squeeze_w.value().end(), real(0.25));
  params.squeeze_b.value()[0] = 0;
  std::fill(params.head1_w.value().begin(), params.head1_w.value().end(), real(0));
  std::fill(params.head2_w.value().begin(), params.head2_w.value().end(), real(0));
  std::fill(params.head1_b.value().begin(), params.head1_b.value().end(), real(0));
  std::fill(params.head2_b.value().begin(), params.head2_b.value().end(), real(0));
  for (int c = 0; c < kDescriptorChannels; ++c) {
    params.head1_w.value()[((c * kDescriptorChannels + c) * 27) + 13] = 1;
    params.head2_w.value()[((c * kDescriptorChannels + c) * 27) + 13] = 1;
  }

  Tensor h = test::random_tensor({4, 8, 8, 8}, rng, -1, 1, false);
  Tensor dmap = dns_dual(h);
  Tensor d = squeeze(dmap, params);
  CHECK(d.shape() == std::vector<std::int64_t>{24, 8, 8, 8});

  const std::int64_t plane = 8 * 8 * 8;
  for (const std::int64_t v : {std::int64_t(0), std::int64_t(73), std::int64_t(511)})
    for (int t = 0; t < 24; ++t) {
      real mean = 0;
      for (int c = 0; c < 4; ++c) mean += dmap.value()[(c * plane + v) * 24 + t] / 4;
      CHECK(d.value()[t * plane + v] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("squeeze: finite-difference gradient through the full module") {
  Rng rng(48);
  NetParams params = tiny_params(2, rng);
  Tensor h = test::random_tensor({2, 8, 8, 8}, rng, -0.5, 0.5, true);
  Tensor probe = test::random_tensor({24, 8, 8, 8}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(squeeze(dns_dual(h), params), probe)); };
  CHECK(test::gradient_check(h, loss_fn) < 1e-4);
  CHECK(test::gradient_check(params.squeeze_w, loss_fn) < 1e-4);
  CHECK(test::gradient_check(params.head2_b, loss_fn) < 1e-4);
}

TEST_CASE("net_forward: shape, determinism, parameter gradient end to end") {
  Rng rng(49);
  NetParams params = tiny_params(2, rng);
  Volume img = test::random_volume({8, 8, 8}, rng);
  {
    NoGradGuard ng;
    Dsir d1 = net_forward(img, params);
    CHECK(d1.channels() == 24);
    CHECK(d1.dims() == Dims{8, 8, 8});
    Dsir d2 = net_forward(img, params);
    for (std::size_t i = 0; i < d1.t.value().size(); ++i)
      CHECK(d1.t.value()[i] == d2.t.value()[i]);
  }

  Tensor probe = test::random_tensor({24, 8, 8, 8}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(net_forward(img, params).t, probe)); };
  CHECK(test::gradient_check(params.proj_w, loss_fn, 1e-4) < 1e-4);

  Volume bad({10, 8, 8});
  CHECK_THROWS_AS(net_forward(bad, params), std::invalid_argument);
}

TEST_CASE("dns values stay in (0,1] on random inputs") {
  Rng rng(50);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor h = test::random_tensor({3, 6, 6, 6}, rng, -4, 4, false);
    Tensor s = dns_dual(h);
    for (const real v : s.value()) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("checkpoint round trip restores network output bit-exactly") {
  Rng rng(51);
  NetConfig cfg;
  cfg.c_h = 4;
  cfg.widths = {2, 3, 4, 5};
  NetParams params = NetParams::random_init(cfg, rng);
  // round-trip through f32 once so saved and reloaded nets agree exactly
  const std::string path = "net_roundtrip.ckpt";
  save_checkpoint(params.to_checkpoint(), path);
  NetParams first = NetParams::from_checkpoint(load_checkpoint(path));
  save_checkpoint(first.to_checkpoint(), path);
  NetParams second = NetParams::from_checkpoint(load_checkpoint(path));
  CHECK(second.config.c_h == 4);
  CHECK(second.config.widths == cfg.widths);

  Volume img = test::random_volume({8, 8, 8}, rng);
  NoGradGuard ng;
  Dsir a = net_forward(img, first);
  Dsir b = net_forward(img, second);
  for (std::size_t i = 0; i < a.t.value().size(); ++i)
    CHECK(a.t.value()[i] == b.t.value()[i]);
  std::remove(path.c_str());
}
