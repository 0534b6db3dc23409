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
#include "dsir/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsir/augmentation.hpp"
#include "dsir/rng.hpp"

namespace dsir {

namespace {

Volume low_frequency_noise(Dims dims, Rng& rng, real lo, real hi) {
  const Dims coarse{std::max(2, dims.h / 8), std::max(2, dims.w / 8), std::max(2, dims.d / 8)};
  Volume small(coarse);
  for (auto& v : small.data) v = rng.uniform(lo, hi);
  return resample_trilinear(small, dims);
}

}  // namespace

Phantom generate_phantom(std::uint64_t seed, Dims dims) {
  if (!dims.positive() || !dims.divisible_by(8))
    throw std::invalid_argument("generate_phantom: dims must be positive and divisible by 8");
  Rng rng(seed);

  Phantom ph;
  ph.seed = seed;
  ph.labels = LabelVolume(dims);
  Volume base = low_frequency_noise(dims, rng, 0.05, 0.30);

  // organ ellipsoid: centred with jitter, semi-axes ~30% of each extent
  const double cx = dims.h * (0.5 + rng.uniform(-0.04, 0.04));
  const double cy = dims.w * (0.5 + rng.uniform(-0.04, 0.04));
  const double cz = dims.d * (0.5 + rng.uniform(-0.04, 0.04));
  const double ax = dims.h * rng.uniform(0.26, 0.34);
  const double ay = dims.w * rng.uniform(0.26, 0.34);
  const double az = dims.d * rng.uniform(0.26, 0.34);

  // tumour sphere strictly inside the organ
  const double min_semi = std::min({ax, ay, az});
  const double tr = min_semi * rng.uniform(0.30, 0.40);
  const double max_off = (min_semi - tr) * 0.5;
  const double tx = cx + rng.uniform(-max_off, max_off);
  const double ty = cy + rng.uniform(-max_off, max_off);
  const double tz = cz + rng.uniform(-max_off, max_off);

  for (int i = 0; i < dims.h; ++i)
    for (int j = 0; j < dims.w; ++j)
      for (int k = 0; k < dims.d; ++k) {
        const std::int64_t idx = (static_cast<std::int64_t>(i) * dims.w + j) * dims.d + k;
        const double ex = (i - cx) / ax, ey = (j - cy) / ay, ez = (k - cz) / az;
        if (ex * ex + ey * ey + ez * ez <= 1.0) ph.labels.data[idx] = 1;
        const double sx = i - tx, sy = j - ty, sz = k - tz;
        if (sx * sx + sy * sy + sz * sz <= tr * tr) ph.labels.data[idx] = 2;
      }

  // vessel: quadratic curve swept with a small radius, crossing the organ
  {
    const double p0[3] = {rng.uniform(0.15, 0.3) * dims.h, rng.uniform(0.1, 0.9) * dims.w,
                          rng.uniform(0.1, 0.3) * dims.d};
    const double p1[3] = {cx + rng.uniform(-0.15, 0.15) * dims.h,
                          cy + rng.uniform(-0.15, 0.15) * dims.w,
                          cz + rng.uniform(-0.15, 0.15) * dims.d};
    const double p2[3] = {rng.uniform(0.7, 0.85) * dims.h, rng.uniform(0.1, 0.9) * dims.w,
                          rng.uniform(0.7, 0.9) * dims.d};
    const double radius = rng.uniform(1.2, 1.8);
    const int steps = 4 * std::max({dims.h, dims.w, dims.d});
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const double b0 = (1 - t) * (1 - t), b1 = 2 * t * (1 - t), b2 = t * t;
      const double q[3] = {b0 * p0[0] + b1 * p1[0] + b2 * p2[0],
                           b0 * p0[1] + b1 * p1[1] + b2 * p2[1],
                           b0 * p0[2] + b1 * p1[2] + b2 * p2[2]};
      const int r = static_cast<int>(std::ceil(radius));
      for (int di = -r; di <= r; ++di)
        for (int dj = -r; dj <= r; ++dj)
          for (int dk = -r; dk <= r; ++dk) {
            const int i = static_cast<int>(std::lround(q[0])) + di;
            const int j = static_cast<int>(std::lround(q[1])) + dj;
            const int k = static_cast<int>(std::lround(q[2])) + dk;
            if (i < 0 || j < 0 || k < 0 || i >= dims.h || j >= dims.w || k >= dims.d) continue;
            const double dx = i - q[0], dy = j - q[1], dz = k - q[2];
            if (dx * dx + dy * dy + dz * dz > radius * radius) continue;
            const std::int64_t idx = (static_cast<std::int64_t>(i) * dims.w + j) * dims.d + k;
            if (ph.labels.data[idx] != 2) ph.labels.data[idx] = 3;  // tumour wins
          }
    }
  }

  // piecewise base intensities, smoothed boundaries, mild multiplicative noise
  Volume intensity(dims);
  for (std::int64_t idx = 0; idx < dims.voxels(); ++idx) {
    switch (ph.labels.data[idx]) {
      case 1: intensity.data[idx] = 0.55; break;
      case 2: intensity.data[idx] = 0.80; break;
      case 3: intensity.data[idx] = 0.95; break;
      default: intensity.data[idx] = base.data[idx];
    }
  }
  intensity = gaussian_smooth(intensity, 1.0);
  for (auto& v : intensity.data) {
    v *= 1.0 + 0.03 * rng.uniform(-1.0, 1.0);
    v = std::clamp(v, real(0), real(1));
  }
  ph.intensity = std::move(intensity);
  ph.labels.rebuild_legend();
  return ph;
}

DisplacementField synth_deformation(std::uint64_t seed, Dims dims, double amplitude,
                                    double smoothness_sigma) {
  if (amplitude < 0) throw std::invalid_argument("synth_deformation: negative amplitude");
  DisplacementField field(dims);
  if (amplitude == 0) return field;
  Rng rng(seed);

  for (int attempt = 0; attempt < 20; ++attempt) {
    Volume comp[3] = {Volume(dims), Volume(dims), Volume(dims)};
    for (auto& c : comp)
      for (auto& v : c.data) v = rng.normal();
    for (auto& c : comp) c = gaussian_smooth(c, smoothness_sigma);

    real max_mag = 0;
    for (std::int64_t idx = 0; idx < dims.voxels(); ++idx) {
      const real m2 = comp[0].data[idx] * comp[0].data[idx] +
                      comp[1].data[idx] * comp[1].data[idx] +
                      comp[2].data[idx] * comp[2].data[idx];
      max_mag = std::max(max_mag, m2);
    }
    max_mag = std::sqrt(max_mag);
    if (max_mag <= 0) continue;
    const real scale = amplitude / max_mag;
    for (std::int64_t idx = 0; idx < dims.voxels(); ++idx) {
      real* u = field.vec(idx);
      for (int a = 0; a < 3; ++a) u[a] = comp[a].data[idx] * scale;
    }
    if (jacobian_folding(field).folding_percent == 0.0) return field;
  }
  throw std::runtime_error(
      "synth_deformation: could not build a fold-free field (amplitude too large for sigma)");
}

std::pair<Volume, Volume> make_modality_pair(const Phantom& phantom, std::uint64_t seed) {
  Rng rng(seed);
  AugmentationConfig cfg;
  cfg.n = 3;
  cfg.delta = 1.0;  // inversion forced
  cfg.seed = seed;
  BezierTransform tf = sample_transform(cfg, rng);
  tf.inverted = true;
  Volume second = apply(tf, phantom.intensity);
  for (auto& v : second.data) {
    v += 0.015 * rng.uniform(-1.0, 1.0);
    v = std::clamp(v, real(0), real(1));
  }
  return {phantom.intensity, second};
}

}  // namespace dsir
