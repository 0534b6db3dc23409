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
#ifndef DSIR_VOLUME_HPP
#define DSIR_VOLUME_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace dsir {

// Scalar type used for in-memory voxel and tensor data. Files store
// 32-bit floats; computation keeps 64-bit so gradient checks and
// accumulation order guarantees hold.
using real = double;

struct Dims {
  int h = 0, w = 0, d = 0;

  friend bool operator==(const Dims&, const Dims&) = default;

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(h) * w * d;
  }
  bool positive() const { return h > 0 && w > 0 && d > 0; }
  bool divisible_by(int f) const {
    return f > 0 && h % f == 0 && w % f == 0 && d % f == 0;
  }
};

// Voxel spacing in mm along each axis.
struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
  bool positive() const { return sx > 0 && sy > 0 && sz > 0; }
};

// Dense scalar 3D image, row-major (h, w, d) with d contiguous.
struct Volume {
  Dims dims;
  Spacing spacing;
  std::vector<real> data;

  Volume() = default;
  Volume(Dims dm, Spacing sp = {}, real fill = 0)
      : dims(dm), spacing(sp), data(static_cast<std::size_t>(dm.voxels()), fill) {}

  std::int64_t index(int i, int j, int k) const {
    return (static_cast<std::int64_t>(i) * dims.w + j) * dims.d + k;
  }
  real& at(int i, int j, int k) { return data[index(i, j, k)]; }
  real at(int i, int j, int k) const { return data[index(i, j, k)]; }
};

// Per-voxel 3-vector field, displacement in voxel units, components
// interleaved: data[3 * voxel + axis].
struct DisplacementField {
  Dims dims;
  std::vector<real> data;

  DisplacementField() = default;
  explicit DisplacementField(Dims dm)
      : dims(dm), data(static_cast<std::size_t>(3 * dm.voxels()), 0) {}

  real* vec(std::int64_t voxel) { return data.data() + 3 * voxel; }
  const real* vec(std::int64_t voxel) const { return data.data() + 3 * voxel; }
};

struct BinaryMask {
  Dims dims;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  explicit BinaryMask(Dims dm, bool fill = false)
      : dims(dm), data(static_cast<std::size_t>(dm.voxels()), fill ? 1 : 0) {}

  std::int64_t count_true() const;
};

// Multi-channel scalar field, channel-major: data[c * voxels + voxel].
struct Field {
  int channels = 0;
  Dims dims;
  Spacing spacing;
  std::vector<real> data;

  Field() = default;
  Field(int c, Dims dm, Spacing sp = {})
      : channels(c),
        dims(dm),
        spacing(sp),
        data(static_cast<std::size_t>(c) * dm.voxels(), 0) {}

  real* channel(int c) { return data.data() + static_cast<std::int64_t>(c) * dims.voxels(); }
  const real* channel(int c) const {
    return data.data() + static_cast<std::int64_t>(c) * dims.voxels();
  }
};

// Per-voxel 3x3 matrix field, row-major (component, axis).
struct MatrixField {
  Dims dims;
  std::vector<real> data;

  MatrixField() = default;
  explicit MatrixField(Dims dm)
      : dims(dm), data(static_cast<std::size_t>(9 * dm.voxels()), 0) {}

  real* mat(std::int64_t voxel) { return data.data() + 9 * voxel; }
  const real* mat(std::int64_t voxel) const { return data.data() + 9 * voxel; }
};

// Per-axis interpolation cell: base index, fractional weight, and the
// derivative of the weight w.r.t. the continuous coordinate (zero in
// the clamped border region).
struct AxisCell {
  int i0 = 0;
  real f = 0;
  real dfdp = 0;
};

inline AxisCell axis_cell(int n, real p) {
  AxisCell c;
  if (n == 1) return c;
  if (p <= 0) {
    c.i0 = 0;
    c.f = 0;
    c.dfdp = p < 0 ? 0 : 1;
    return c;
  }
  if (p >= n - 1) {
    c.i0 = n - 2;
    c.f = 1;
    c.dfdp = p > n - 1 ? 0 : 1;
    return c;
  }
  int i0 = static_cast<int>(p);
  if (i0 > n - 2) i0 = n - 2;
  c.i0 = i0;
  c.f = p - i0;
  c.dfdp = 1;
  return c;
}

// Border-replicated trilinear interpolation at (p0, p1, p2) voxel units.
real trilinear_sample(const Volume& v, real p0, real p1, real p2);

// Same, on one channel plane of a Field; optionally returns the spatial
// gradient of the interpolant w.r.t. the coordinate.
real trilinear_sample_plane(const real* plane, Dims dims, real p0, real p1, real p2,
                            real grad[3] = nullptr);

// output(x) = v(x + phi(x)), border replication.
Volume warp(const Volume& v, const DisplacementField& phi);
Field warp_field(const Field& f, const DisplacementField& phi);

// Separable Gaussian with std-dev sigma voxels, kernel truncated at
// ±ceil(3 sigma) and renormalised; sigma = 0 is the identity.
Volume gaussian_smooth(const Volume& v, double sigma);
Field gaussian_smooth_field(const Field& f, double sigma);
std::vector<real> gaussian_kernel(double sigma);

// Resampling on the aligned-corners grid of new_dims.
Volume resample_trilinear(const Volume& v, Dims new_dims);
Field resample_field(const Field& f, Dims new_dims);

// Central differences in the interior, one-sided at borders, voxel
// units. mat(voxel)[3*m + a] = d phi_m / d x_a.
MatrixField spatial_gradient(const DisplacementField& phi);

// Min-max normalisation to [0, 1]; constant volumes map to all zeros.
Volume normalize_intensity(const Volume& v);

bool all_finite(const std::vector<real>& v);

}  // namespace dsir

#endif  // DSIR_VOLUME_HPP
