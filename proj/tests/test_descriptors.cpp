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

#include <algorithm>
#include <cmath>

#include "dsir/descriptors.hpp"
#include "support.hpp"

using namespace dsir;

namespace {

// Literal brute-force restatement: twelve direct-6-NH sqrt(2) pairs,
// 3^3 patch SSD with every sample coordinate clamped individually.
std::vector<real> mind_oracle(const Volume& v) {
  const int offs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 2>> pairs;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int sa = 0; sa < 2; ++sa)
        for (int sb = 0; sb < 2; ++sb) pairs.push_back({2 * a + sa, 2 * b + sb});
  auto at = [&](int i, int j, int k) {
    i = std::clamp(i, 0, v.dims.h - 1);
    j = std::clamp(j, 0, v.dims.w - 1);
    k = std::clamp(k, 0, v.dims.d - 1);
    return v.data[v.index(i, j, k)];
  };
  const std::int64_t plane = v.dims.voxels();
  std::vector<real> out(static_cast<std::size_t>(12 * plane));
  for (int i = 0; i < v.dims.h; ++i)
    for (int j = 0; j < v.dims.w; ++j)
      for (int k = 0; k < v.dims.d; ++k) {
        real dist[12];
        real mean = 0;
        for (int p = 0; p < 12; ++p) {
          const auto& oa = offs[pairs[p][0]];
          const auto& ob = offs[pairs[p][1]];
          real ssd = 0;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
              for (int dk = -1; dk <= 1; ++dk) {
                const real d = at(i + oa[0] + di, j + oa[1] + dj, k + oa[2] + dk) -
                               at(i + ob[0] + di, j + ob[1] + dj, k + ob[2] + dk);
                ssd += d * d;
              }
          dist[p] = ssd;
          mean += ssd / 12;
        }
        const real var = std::max(mean, real(1e-6));
        for (int p = 0; p < 12; ++p)
          out[p * plane + v.index(i, j, k)] = std::exp(-dist[p] / var);
      }
  return out;
}

}  // namespace

TEST_CASE("mind: constants, equal patch distances, brute-force oracle") {
  Volume c({5, 5, 5}, {}, 0.7);
  const Field mc = mind(c);
  CHECK(mc.channels == 12);
  for (const real v : mc.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  // radial quadratic: by symmetry all twelve patch distances at the
  // centre are equal and positive, so every channel is exp(-1) there
  Volume radial({7, 7, 7});
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j)
      for (int k = 0; k < 7; ++k) {
        const real r2 = (i - 3.0) * (i - 3.0) + (j - 3.0) * (j - 3.0) + (k - 3.0) * (k - 3.0);
        radial.at(i, j, k) = r2 / 27.0;
      }
  const Field mr = mind(radial);
  const std::int64_t centre = radial.index(3, 3, 3);
  for (int p = 0; p < 12; ++p)
    CHECK(mr.data[p * radial.dims.voxels() + centre] ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  Rng rng(17);
  const Volume v = test::random_volume({5, 5, 5}, rng);
  const Field m = mind(v);
  const auto oracle = mind_oracle(v);
  real worst = 0;
  for (std::size_t i = 0; i < oracle.size(); ++i)
    worst = std::max(worst, std::abs(m.data[i] - oracle[i]));
  CHECK(worst < 1e-6);

  for (const real x : m.data) {
    CHECK(x > 0.0);
    CHECK(x <= 1.0 + 1e-12);
  }
}

TEST_CASE("mind is invariant to affine intensity rescaling") {
  Rng rng(18);
  const Volume v = test::random_volume({6, 6, 6}, rng, 0.0, 1.0);
  Volume scaled = v;
  for (auto& x : scaled.data) x = 0.5 * x + 0.25;
  const Field a = mind(v);
  const Field b = mind(scaled);
  real worst = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  CHECK(worst < 1e-5);
}

TEST_CASE("mind_ssd: zero at identity, constant channel offset, gradient") {
  Rng rng(19);
  const Volume f = test::random_volume({6, 6, 6}, rng);
  DisplacementField zero(f.dims);
  CHECK(mind_ssd(f, f, zero) == doctest::Approx(0.0).epsilon(1e-12));

  Field da(3, {4, 4, 4});
  for (auto& x : da.data) x = rng.uniform();
  Field db = da;
  const real offset = 0.37;
  for (auto& x : db.data) x += offset;
  DisplacementField z2({4, 4, 4});
  CHECK(mind_ssd_field(da, db, z2, nullptr) ==
        doctest::Approx(offset * offset).epsilon(1e-10));

  DisplacementField wrong({3, 4, 4});
  CHECK_THROWS_AS(mind_ssd_field(da, db, wrong, nullptr), std::invalid_argument);

  // finite differences on a smooth random pair at 8^3
  Volume vf = gaussian_smooth(test::random_volume({8, 8, 8}, rng), 1.0);
  Volume vm = gaussian_smooth(test::random_volume({8, 8, 8}, rng), 1.0);
  const Field descf = mind(vf);
  const Field descm = mind(vm);
  DisplacementField phi(vf.dims);
  for (auto& u : phi.data) u = rng.uniform(0.2, 0.45) * (rng.uniform() < 0.5 ? -1 : 1);
  DisplacementField grad(vf.dims);
  mind_ssd_field(descf, descm, phi, &grad);
  auto value_fn = [&]() { return mind_ssd_field(descf, descm, phi, nullptr); };
  CHECK(test::gradient_check_buffer(phi.data, value_fn, grad.data) < 1e-3);
}

TEST_CASE("nmi: identical two-level image scores 2 with narrow windows") {
  // narrow Parzen windows put each level's mass on a single bin when
  // the levels sit exactly on bin coordinates
  const int bins = 32;
  const real width = 0.4;
  const real margin = std::max(0.0, 2 * width - 0.5);
  const real scale = (bins - 1) - 2 * margin;
  const real v1 = (8 - margin) / scale;
  const real v2 = (20 - margin) / scale;
  Volume img({6, 6, 6});
  for (std::int64_t i = 0; i < img.dims.voxels(); ++i) img.data[i] = (i % 2 == 0) ? v1 : v2;
  DisplacementField zero(img.dims);
  CHECK(nmi(img, img, zero, bins, width) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("nmi: independent paired intensities score about 1") {
  // checkerboard against stripes: the four level combinations appear in
  // exactly equal counts, so the joint factorises
  Volume f({8, 8, 8}), m({8, 8, 8});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k) {
        f.at(i, j, k) = ((i + j + k) % 2 == 0) ? 0.25 : 0.75;
        m.at(i, j, k) = (k % 2 == 0) ? 0.25 : 0.75;
      }
  DisplacementField zero(f.dims);
  CHECK(nmi(f, m, zero, 32, 1.0) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("nmi: degenerate, bounds, symmetry, histogram mass") {
  Volume constant({5, 5, 5}, {}, 0.5);
  Rng rng(20);
  Volume v = test::random_volume({5, 5, 5}, rng);
  DisplacementField zero(v.dims);
  CHECK_THROWS_AS(nmi(constant, v, zero), std::invalid_argument);

  for (int trial = 0; trial < 3; ++trial) {
    const Volume a = test::random_volume({6, 6, 6}, rng);
    const Volume b = test::random_volume({6, 6, 6}, rng);
    DisplacementField z({6, 6, 6});
    const real value = nmi(a, b, z);
    CHECK(value >= 1.0 - 1e-9);
    CHECK(value <= 2.0 + 1e-9);
    CHECK(std::abs(nmi(a, b, z) - nmi(b, a, z)) < 1e-9);

    const JointHistogram hist = joint_histogram(a, b, z, 32, 1.0);
    CHECK(hist.total == doctest::Approx(static_cast<real>(z.dims.voxels())).epsilon(1e-6));
  }
}

TEST_CASE("nmi: finite-difference gradient through the warp") {
  Rng rng(21);
  Volume f = gaussian_smooth(test::random_volume({8, 8, 8}, rng), 1.0);
  Volume m = gaussian_smooth(test::random_volume({8, 8, 8}, rng), 1.0);
  f = normalize_intensity(f);
  m = normalize_intensity(m);
  DisplacementField phi(f.dims);
  for (auto& u : phi.data) u = rng.uniform(0.2, 0.4) * (rng.uniform() < 0.5 ? -1 : 1);
  DisplacementField grad(f.dims);
  nmi_with_grad(f, m, phi, 16, 1.0, &grad);
  auto value_fn = [&]() { return nmi(f, m, phi, 16, 1.0); };
  CHECK(test::gradient_check_buffer(phi.data, value_fn, grad.data) < 1e-3);
}
