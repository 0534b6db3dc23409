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
#include "dsir/augmentation.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "dsir/parallel.hpp"

namespace dsir {

real bernstein(int i, int n, real t) {
  if (i < 0 || i > n) throw std::invalid_argument("bernstein: index out of range");
  real coeff = 1;
  for (int q = 0; q < i; ++q) coeff = coeff * (n - q) / (q + 1);
  return coeff * std::pow(t, i) * std::pow(1 - t, n - i);
}

namespace {

constexpr int kCurveSamples = 4096;

// Rasterise the parametric curve into a function lookup table by dense
// evaluation followed by linear interpolation in x. Both coordinates
// are monotone because the control polygon is sorted coordinate-wise.
void build_lut(BezierTransform& tf) {
  const int n = static_cast<int>(tf.control_points.size()) - 1;
  std::vector<real> cx(kCurveSamples), cy(kCurveSamples);
  for (int s = 0; s < kCurveSamples; ++s) {
    const real t = static_cast<real>(s) / (kCurveSamples - 1);
    real x = 0, y = 0;
    for (int i = 0; i <= n; ++i) {
      const real b = bernstein(i, n, t);
      x += tf.control_points[i][0] * b;
      y += tf.control_points[i][1] * b;
    }
    cx[s] = x;
    cy[s] = y;
  }
  tf.lut.assign(BezierTransform::kLutSize, 0);
  int seg = 0;
  for (int q = 0; q < BezierTransform::kLutSize; ++q) {
    const real v = static_cast<real>(q) / (BezierTransform::kLutSize - 1);
    while (seg < kCurveSamples - 2 && cx[seg + 1] < v) ++seg;
    const real dx = cx[seg + 1] - cx[seg];
    real y;
    if (dx < 1e-12) {
      y = real(0.5) * (cy[seg] + cy[seg + 1]);
    } else {
      const real f = std::clamp((v - cx[seg]) / dx, real(0), real(1));
      y = cy[seg] + f * (cy[seg + 1] - cy[seg]);
    }
    tf.lut[q] = std::clamp(y, real(0), real(1));
  }
  tf.lut.front() = 0;
  tf.lut.back() = 1;
}

}  // namespace

BezierTransform transform_from_points(std::vector<std::array<real, 2>> interior_points,
                                      bool inverted) {
  for (const auto& p : interior_points)
    if (p[0] < 0 || p[0] > 1 || p[1] < 0 || p[1] > 1)
      throw std::invalid_argument("transform_from_points: control point outside [0,1]^2");
  std::vector<real> xs, ys;
  for (const auto& p : interior_points) {
    xs.push_back(p[0]);
    ys.push_back(p[1]);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  BezierTransform tf;
  tf.inverted = inverted;
  tf.control_points.push_back({0, 0});
  for (std::size_t i = 0; i < xs.size(); ++i) tf.control_points.push_back({xs[i], ys[i]});
  tf.control_points.push_back({1, 1});
  build_lut(tf);
  return tf;
}

BezierTransform sample_transform(const AugmentationConfig& cfg, Rng& rng) {
  if (cfg.n < 1) throw std::invalid_argument("sample_transform: n must be >= 1");
  if (cfg.delta < 0 || cfg.delta > 1)
    throw std::invalid_argument("sample_transform: delta must lie in [0,1]");
  std::vector<std::array<real, 2>> interior;
  for (int i = 0; i < cfg.n - 1; ++i) {
    const real x = rng.uniform();
    const real y = rng.uniform();
    interior.push_back({x, y});
  }
  const real p = rng.uniform();
  const bool inverted = cfg.delta > 0 && p <= cfg.delta;
  BezierTransform tf = transform_from_points(std::move(interior), inverted);
  tf.seed = cfg.seed;
  return tf;
}

real bezier_eval(const BezierTransform& tf, real v) {
  v = std::clamp(v, real(0), real(1));
  const real pos = v * (BezierTransform::kLutSize - 1);
  const int i = std::min(static_cast<int>(pos), BezierTransform::kLutSize - 2);
  const real f = pos - i;
  return tf.lut[i] * (1 - f) + tf.lut[i + 1] * f;
}

Volume apply(const BezierTransform& tf, const Volume& image) {
  for (const real v : image.data)
    if (!(v >= -1e-9 && v <= 1 + 1e-9))
      throw std::invalid_argument("apply: image intensities must be normalised to [0,1]");
  Volume out(image.dims, image.spacing);
  const bool inv = tf.inverted;
  parallel_chunks(image.dims.voxels(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const real v = image.data[i];
      out.data[i] = bezier_eval(tf, inv ? 1 - v : v);
    }
  });
  return out;
}

std::string serialize_transform(const BezierTransform& tf) {
  nlohmann::json j;
  j["control_points"] = nlohmann::json::array();
  for (const auto& p : tf.control_points) j["control_points"].push_back({p[0], p[1]});
  j["inverted"] = tf.inverted;
  j["seed"] = tf.seed;
  return j.dump(2);
}

BezierTransform deserialize_transform(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<std::array<real, 2>> interior;
  const auto& pts = j.at("control_points");
  if (pts.size() < 2) throw std::runtime_error("transform record: too few control points");
  for (std::size_t i = 1; i + 1 < pts.size(); ++i)
    interior.push_back({pts[i][0].get<real>(), pts[i][1].get<real>()});
  BezierTransform tf = transform_from_points(std::move(interior), j.at("inverted").get<bool>());
  tf.seed = j.value("seed", std::uint64_t{0});
  return tf;
}

}  // namespace dsir
