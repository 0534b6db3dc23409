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

#include "dsir/augmentation.hpp"
#include "support.hpp"

using namespace dsir;

TEST_CASE("bernstein: known values, partition of unity, range errors") {
  CHECK(bernstein(0, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(bernstein(1, 3, 0.5) == doctest::Approx(0.375).epsilon(1e-14));
  for (int n = 1; n <= 6; ++n)
    for (double t = 0; t <= 1.0 + 1e-12; t += 0.125) {
      real sum = 0;
      for (int i = 0; i <= n; ++i) sum += bernstein(i, n, t);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK_THROWS_AS(bernstein(4, 3, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(bernstein(-1, 3, 0.5), std::invalid_argument);
}

TEST_CASE("sample_transform: n=1 identity, delta=0 never inverts, determinism") {
  AugmentationConfig cfg;
  cfg.n = 1;
  cfg.delta = 0.0;
  Rng rng(5);
  const BezierTransform tf = sample_transform(cfg, rng);
  CHECK(tf.control_points.size() == 2);
  for (int q = 0; q < BezierTransform::kLutSize; ++q) {
    const real v = static_cast<real>(q) / (BezierTransform::kLutSize - 1);
    CHECK(tf.lut[q] == doctest::Approx(v).epsilon(1e-9));
  }

  cfg.n = 4;
  for (int trial = 0; trial < 50; ++trial) {
    const BezierTransform t = sample_transform(cfg, rng);
    CHECK_FALSE(t.inverted);
  }

  cfg.delta = 0.5;
  Rng a(99), b(99);
  const BezierTransform ta = sample_transform(cfg, a);
  const BezierTransform tb = sample_transform(cfg, b);
  CHECK(ta.inverted == tb.inverted);
  CHECK(ta.control_points == tb.control_points);
  CHECK(ta.lut == tb.lut);
}

TEST_CASE("bezier_eval: identity, pinned endpoints, curve point from the formula") {
  const BezierTransform ident = transform_from_points({}, false);
  CHECK(bezier_eval(ident, 0.3) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(bezier_eval(ident, 0.0) == doctest::Approx(0.0));
  CHECK(bezier_eval(ident, 1.0) == doctest::Approx(1.0));
  CHECK(bezier_eval(ident, -2.0) == doctest::Approx(0.0));  // clamped

  // n=2, control points (0,0), (0.25,0.75), (1,1): at t=0.5 the curve
  // passes through (0.375, 0.625)
  const BezierTransform tf = transform_from_points({{0.25, 0.75}}, false);
  CHECK(bezier_eval(tf, 0.375) == doctest::Approx(0.625).epsilon(1e-3));
}

TEST_CASE("lookup tables are monotone for random transforms") {
  AugmentationConfig cfg;
  cfg.n = 3;
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const BezierTransform tf = sample_transform(cfg, rng);
    for (int q = 1; q < BezierTransform::kLutSize; ++q)
      CHECK(tf.lut[q] >= tf.lut[q - 1] - 1e-12);
    CHECK(tf.lut.front() == 0.0);
    CHECK(tf.lut.back() == 1.0);
  }
}

TEST_CASE("apply: branch semantics, level sets, geometry preservation") {
  Rng rng(7);
  Volume img = test::random_volume({6, 6, 6}, rng);
  img.spacing = {2.0, 1.5, 1.0};
  img.data[17] = img.data[3];  // force one repeated intensity

  BezierTransform ident = transform_from_points({}, false);
  const Volume same = apply(ident, img);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(img.data[i]).epsilon(1e-9));

  ident.inverted = true;
  const Volume flipped = apply(ident, img);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(flipped.data[i] == doctest::Approx(1.0 - img.data[i]).epsilon(1e-9));

  AugmentationConfig cfg;
  cfg.n = 3;
  const BezierTransform tf = sample_transform(cfg, rng);
  const Volume mapped = apply(tf, img);
  CHECK(mapped.dims == img.dims);
  CHECK(mapped.spacing == img.spacing);
  CHECK(mapped.data[17] == mapped.data[3]);  // level sets preserved exactly
  // monotone: ordered inputs stay ordered when not inverted
  if (!tf.inverted) {
    for (std::size_t i = 1; i < img.data.size(); ++i) {
      const bool le = img.data[i - 1] <= img.data[i];
      if (le) CHECK(mapped.data[i - 1] <= mapped.data[i] + 1e-12);
    }
  }

  Volume bad = img;
  bad.data[0] = 1.5;
  CHECK_THROWS_AS(apply(tf, bad), std::invalid_argument);
}

TEST_CASE("transform records round trip") {
  AugmentationConfig cfg;
  cfg.n = 4;
  cfg.delta = 1.0;
  cfg.seed = 1234;
  Rng rng(1234);
  const BezierTransform tf = sample_transform(cfg, rng);
  const std::string text = serialize_transform(tf);
  const BezierTransform back = deserialize_transform(text);
  CHECK(back.inverted == tf.inverted);
  CHECK(back.seed == tf.seed);
  REQUIRE(back.control_points.size() == tf.control_points.size());
  for (std::size_t i = 0; i < tf.control_points.size(); ++i) {
    CHECK(back.control_points[i][0] == doctest::Approx(tf.control_points[i][0]).epsilon(1e-12));
    CHECK(back.control_points[i][1] == doctest::Approx(tf.control_points[i][1]).epsilon(1e-12));
  }
  for (int q = 0; q < BezierTransform::kLutSize; ++q)
    CHECK(back.lut[q] == doctest::Approx(tf.lut[q]).epsilon(1e-12));
}
