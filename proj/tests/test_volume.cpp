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

#include "dsir/volume.hpp"
#include "support.hpp"

using namespace dsir;

namespace {

Volume ramp_axis0(Dims dm) {
  Volume v(dm);
  for (int i = 0; i < dm.h; ++i)
    for (int j = 0; j < dm.w; ++j)
      for (int k = 0; k < dm.d; ++k) v.at(i, j, k) = static_cast<real>(i);
  return v;
}

}  // namespace

TEST_CASE("trilinear_sample: constants, ramps, border clamp") {
  Volume c({4, 4, 4}, {}, 3.25);
  CHECK(trilinear_sample(c, 1.7, 2.3, 0.9) == doctest::Approx(3.25).epsilon(1e-14));

  Volume r = ramp_axis0({6, 4, 4});
  CHECK(trilinear_sample(r, 2.5, 0, 0) == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(trilinear_sample(r, -5, 0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(trilinear_sample(r, 100, 1, 1) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("trilinear_sample reproduces lattice values exactly") {
  Rng rng(7);
  Volume v = test::random_volume({5, 4, 3}, rng);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 3; ++k)
        CHECK(trilinear_sample(v, i, j, k) == v.at(i, j, k));
}

TEST_CASE("warp: zero field is the identity, constant shift moves a ramp") {
  Rng rng(3);
  Volume v = test::random_volume({5, 5, 5}, rng);
  DisplacementField zero(v.dims);
  Volume w = warp(v, zero);
  for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(w.data[i] == v.data[i]);

  Volume r = ramp_axis0({8, 4, 4});
  DisplacementField shift(r.dims);
  for (std::int64_t t = 0; t < r.dims.voxels(); ++t) shift.vec(t)[0] = 1.0;
  Volume moved = warp(r, shift);
  for (int i = 0; i < 7; ++i)  // interior along the shifted axis
    CHECK(moved.at(i, 2, 2) == doctest::Approx(i + 1.0).epsilon(1e-13));

  DisplacementField wrong({4, 4, 4});
  CHECK_THROWS_AS(warp(r, wrong), std::invalid_argument);
}

TEST_CASE("gaussian_smooth: constants, sigma 0, impulse response") {
  Volume c({6, 6, 6}, {}, 0.4);
  Volume s = gaussian_smooth(c, 1.5);
  for (const real x : s.data) CHECK(x == doctest::Approx(0.4).epsilon(1e-12));

  Rng rng(9);
  Volume v = test::random_volume({4, 4, 4}, rng);
  Volume same = gaussian_smooth(v, 0.0);
  for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(same.data[i] == v.data[i]);

  // central value of a smoothed unit impulse equals the cube of the
  // normalised 1D kernel's centre weight
  Volume imp({9, 9, 9}, {}, 0.0);
  imp.at(4, 4, 4) = 1.0;
  Volume blurred = gaussian_smooth(imp, 1.0);
  real z = 0;
  for (int k = -3; k <= 3; ++k) z += std::exp(-0.5 * k * k);
  const real w0 = 1.0 / z;
  CHECK(blurred.at(4, 4, 4) == doctest::Approx(w0 * w0 * w0).epsilon(1e-12));

  CHECK_THROWS_AS(gaussian_smooth(c, -0.1), std::invalid_argument);
}

TEST_CASE("resample_trilinear: identity dims, constants, ramp round trip") {
  Rng rng(11);
  Volume v = test::random_volume({6, 5, 4}, rng);
  Volume same = resample_trilinear(v, v.dims);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(v.data[i]).epsilon(1e-12));

  Volume c({5, 5, 5}, {}, 2.5);
  Volume half = resample_trilinear(c, {3, 3, 3});
  for (const real x : half.data) CHECK(x == doctest::Approx(2.5).epsilon(1e-13));

  Volume r = ramp_axis0({8, 8, 8});
  Volume back = resample_trilinear(resample_trilinear(r, {4, 4, 4}), {8, 8, 8});
  real worst = 0;
  for (int i = 1; i < 7; ++i)
    for (int j = 1; j < 7; ++j)
      for (int k = 1; k < 7; ++k)
        worst = std::max(worst, std::abs(back.at(i, j, k) - r.at(i, j, k)));
  CHECK(worst < 1e-6);

  CHECK_THROWS_AS(resample_trilinear(r, {0, 4, 4}), std::invalid_argument);
}

TEST_CASE("spatial_gradient: zero, linear field, degenerate dims") {
  DisplacementField zero({4, 4, 4});
  MatrixField g0 = spatial_gradient(zero);
  for (const real x : g0.data) CHECK(x == 0.0);

  DisplacementField lin({6, 6, 6});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k) {
        real* u = lin.vec((static_cast<std::int64_t>(i) * 6 + j) * 6 + k);
        u[0] = 0.5 * i;
        u[1] = 0.5 * j;
        u[2] = 0.5 * k;
      }
  MatrixField g = spatial_gradient(lin);
  for (int i = 1; i < 5; ++i)
    for (int j = 1; j < 5; ++j)
      for (int k = 1; k < 5; ++k) {
        const real* m = g.mat((static_cast<std::int64_t>(i) * 6 + j) * 6 + k);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            CHECK(m[3 * a + b] == doctest::Approx(a == b ? 0.5 : 0.0).epsilon(1e-10));
      }

  DisplacementField thin({1, 6, 6});
  CHECK_THROWS_AS(spatial_gradient(thin), std::invalid_argument);
}

TEST_CASE("field helpers: warp and smooth preserve per-channel semantics") {
  Rng rng(21);
  Field f(3, {5, 5, 5});
  for (auto& x : f.data) x = rng.uniform();
  DisplacementField zero(f.dims);
  Field w = warp_field(f, zero);
  for (std::size_t i = 0; i < f.data.size(); ++i) CHECK(w.data[i] == f.data[i]);

  Field smoothed = gaussian_smooth_field(f, 1.0);
  Volume ch0{f.dims, {}, 0};
  std::copy(f.channel(0), f.channel(0) + f.dims.voxels(), ch0.data.begin());
  Volume ch0s = gaussian_smooth(ch0, 1.0);
  for (std::int64_t i = 0; i < f.dims.voxels(); ++i)
    CHECK(smoothed.channel(0)[i] == doctest::Approx(ch0s.data[i]).epsilon(1e-14));
}
