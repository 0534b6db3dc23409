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
#include "dsir/volume.hpp"

#include <algorithm>
#include <stdexcept>

#include "dsir/parallel.hpp"

namespace dsir {

std::int64_t BinaryMask::count_true() const {
  std::int64_t n = 0;
  for (const auto b : data) n += b != 0;
  return n;
}

bool all_finite(const std::vector<real>& v) {
  for (const real x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

real trilinear_sample_plane(const real* plane, Dims dims, real p0, real p1, real p2,
                            real grad[3]) {
  const AxisCell c0 = axis_cell(dims.h, p0);
  const AxisCell c1 = axis_cell(dims.w, p1);
  const AxisCell c2 = axis_cell(dims.d, p2);

  const std::int64_t sw = dims.d;
  const std::int64_t sh = static_cast<std::int64_t>(dims.w) * dims.d;
  const std::int64_t base = c0.i0 * sh + c1.i0 * sw + c2.i0;
  const std::int64_t o0 = dims.h > 1 ? sh : 0;
  const std::int64_t o1 = dims.w > 1 ? sw : 0;
  const std::int64_t o2 = dims.d > 1 ? 1 : 0;

  const real v000 = plane[base];
  const real v001 = plane[base + o2];
  const real v010 = plane[base + o1];
  const real v011 = plane[base + o1 + o2];
  const real v100 = plane[base + o0];
  const real v101 = plane[base + o0 + o2];
  const real v110 = plane[base + o0 + o1];
  const real v111 = plane[base + o0 + o1 + o2];

  const real g0 = c0.f, g1 = c1.f, g2 = c2.f;
  const real h0 = 1 - g0, h1 = 1 - g1, h2 = 1 - g2;

  const real c00 = v000 * h2 + v001 * g2;
  const real c01 = v010 * h2 + v011 * g2;
  const real c10 = v100 * h2 + v101 * g2;
  const real c11 = v110 * h2 + v111 * g2;
  const real c0m = c00 * h1 + c01 * g1;
  const real c1m = c10 * h1 + c11 * g1;

  if (grad) {
    grad[0] = (c1m - c0m) * c0.dfdp;
    grad[1] = ((c01 - c00) * h0 + (c11 - c10) * g0) * c1.dfdp;
    grad[2] = ((v001 - v000) * h0 * h1 + (v011 - v010) * h0 * g1 +
               (v101 - v100) * g0 * h1 + (v111 - v110) * g0 * g1) *
              c2.dfdp;
  }
  return c0m * h0 + c1m * g0;
}

real trilinear_sample(const Volume& v, real p0, real p1, real p2) {
  return trilinear_sample_plane(v.data.data(), v.dims, p0, p1, p2);
}

Volume warp(const Volume& v, const DisplacementField& phi) {
  if (!(v.dims == phi.dims))
    throw std::invalid_argument("warp: volume and field dims differ");
  Volume out(v.dims, v.spacing);
  const Dims dm = v.dims;
  parallel_chunks(dm.voxels(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % dm.d);
      const int j = static_cast<int>((idx / dm.d) % dm.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
      const real* u = phi.vec(idx);
      out.data[idx] = trilinear_sample_plane(v.data.data(), dm, i + u[0], j + u[1], k + u[2]);
    }
  });
  return out;
}

Field warp_field(const Field& f, const DisplacementField& phi) {
  if (!(f.dims == phi.dims))
    throw std::invalid_argument("warp_field: field and displacement dims differ");
  Field out(f.channels, f.dims, f.spacing);
  const Dims dm = f.dims;
  const std::int64_t plane = dm.voxels();
  parallel_chunks(plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % dm.d);
      const int j = static_cast<int>((idx / dm.d) % dm.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
      const real* u = phi.vec(idx);
      for (int c = 0; c < f.channels; ++c) {
        out.data[c * plane + idx] =
            trilinear_sample_plane(f.data.data() + c * plane, dm, i + u[0], j + u[1], k + u[2]);
      }
    }
  });
  return out;
}

std::vector<real> gaussian_kernel(double sigma) {
  if (sigma < 0) throw std::invalid_argument("gaussian_kernel: negative sigma");
  if (sigma == 0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<real> k(2 * radius + 1);
  real sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const real w = std::exp(-0.5 * (static_cast<real>(i) * i) / (sigma * sigma));
    k[i + radius] = w;
    sum += w;
  }
  for (real& w : k) w /= sum;
  return k;
}

namespace {

// One separable pass along `axis` with border replication.
void smooth_axis(const real* in, real* out, Dims dm, const std::vector<real>& kernel, int axis) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = axis == 0 ? dm.h : axis == 1 ? dm.w : dm.d;
  const std::int64_t stride = axis == 0 ? static_cast<std::int64_t>(dm.w) * dm.d
                              : axis == 1 ? dm.d
                                          : 1;
  // Iterate over lines perpendicular to `axis`.
  const std::int64_t lines = dm.voxels() / n;
  parallel_chunks(lines, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t line = lo; line < hi; ++line) {
      std::int64_t base;
      if (axis == 0) {
        base = line;  // (j,k) plane index
      } else if (axis == 1) {
        const std::int64_t i = line / dm.d;
        const std::int64_t k = line % dm.d;
        base = i * dm.w * dm.d + k;
      } else {
        base = line * dm.d;
      }
      for (int p = 0; p < n; ++p) {
        real acc = 0;
        for (int t = -radius; t <= radius; ++t) {
          const int q = std::clamp(p + t, 0, n - 1);
          acc += kernel[t + radius] * in[base + q * stride];
        }
        out[base + p * stride] = acc;
      }
    }
  });
}

}  // namespace

Volume gaussian_smooth(const Volume& v, double sigma) {
  if (sigma < 0) throw std::invalid_argument("gaussian_smooth: negative sigma");
  if (sigma == 0) return v;
  const auto kernel = gaussian_kernel(sigma);
  Volume tmp(v.dims, v.spacing);
  Volume out = v;
  smooth_axis(out.data.data(), tmp.data.data(), v.dims, kernel, 0);
  smooth_axis(tmp.data.data(), out.data.data(), v.dims, kernel, 1);
  smooth_axis(out.data.data(), tmp.data.data(), v.dims, kernel, 2);
  out.data.swap(tmp.data);
  return out;
}

Field gaussian_smooth_field(const Field& f, double sigma) {
  if (sigma < 0) throw std::invalid_argument("gaussian_smooth_field: negative sigma");
  if (sigma == 0) return f;
  const auto kernel = gaussian_kernel(sigma);
  Field out = f;
  std::vector<real> tmp(f.dims.voxels());
  const std::int64_t plane = f.dims.voxels();
  for (int c = 0; c < f.channels; ++c) {
    real* ch = out.data.data() + c * plane;
    smooth_axis(ch, tmp.data(), f.dims, kernel, 0);
    smooth_axis(tmp.data(), ch, f.dims, kernel, 1);
    smooth_axis(ch, tmp.data(), f.dims, kernel, 2);
    std::copy(tmp.begin(), tmp.end(), ch);
  }
  return out;
}

namespace {

inline real source_coord(int out_i, int out_n, int in_n) {
  if (out_n == 1) return 0.5 * (in_n - 1);
  return static_cast<real>(out_i) * (in_n - 1) / (out_n - 1);
}

}  // namespace

Volume resample_trilinear(const Volume& v, Dims new_dims) {
  if (!new_dims.positive())
    throw std::invalid_argument("resample_trilinear: non-positive dims");
  Volume out(new_dims, v.spacing);
  // keep physical extent: spacing scales with the grid
  out.spacing.sx = v.spacing.sx * (new_dims.h > 1 ? real(v.dims.h - 1) / (new_dims.h - 1) : 1);
  out.spacing.sy = v.spacing.sy * (new_dims.w > 1 ? real(v.dims.w - 1) / (new_dims.w - 1) : 1);
  out.spacing.sz = v.spacing.sz * (new_dims.d > 1 ? real(v.dims.d - 1) / (new_dims.d - 1) : 1);
  parallel_chunks(new_dims.voxels(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % new_dims.d);
      const int j = static_cast<int>((idx / new_dims.d) % new_dims.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(new_dims.d) * new_dims.w));
      out.data[idx] = trilinear_sample_plane(v.data.data(), v.dims,
                                             source_coord(i, new_dims.h, v.dims.h),
                                             source_coord(j, new_dims.w, v.dims.w),
                                             source_coord(k, new_dims.d, v.dims.d));
    }
  });
  return out;
}

Field resample_field(const Field& f, Dims new_dims) {
  if (!new_dims.positive()) throw std::invalid_argument("resample_field: non-positive dims");
  Field out(f.channels, new_dims, f.spacing);
  const std::int64_t in_plane = f.dims.voxels();
  const std::int64_t out_plane = new_dims.voxels();
  parallel_chunks(out_plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % new_dims.d);
      const int j = static_cast<int>((idx / new_dims.d) % new_dims.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(new_dims.d) * new_dims.w));
      const real p0 = source_coord(i, new_dims.h, f.dims.h);
      const real p1 = source_coord(j, new_dims.w, f.dims.w);
      const real p2 = source_coord(k, new_dims.d, f.dims.d);
      for (int c = 0; c < f.channels; ++c)
        out.data[c * out_plane + idx] =
            trilinear_sample_plane(f.data.data() + c * in_plane, f.dims, p0, p1, p2);
    }
  });
  return out;
}

MatrixField spatial_gradient(const DisplacementField& phi) {
  const Dims dm = phi.dims;
  if (dm.h < 2 || dm.w < 2 || dm.d < 2)
    throw std::invalid_argument("spatial_gradient: needs at least 2 voxels per axis");
  MatrixField out(dm);
  const std::int64_t strides[3] = {static_cast<std::int64_t>(dm.w) * dm.d, dm.d, 1};
  const int extent[3] = {dm.h, dm.w, dm.d};
  parallel_chunks(dm.voxels(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int pos[3] = {static_cast<int>(idx / strides[0]),
                          static_cast<int>((idx / dm.d) % dm.w),
                          static_cast<int>(idx % dm.d)};
      real* m = out.mat(idx);
      for (int a = 0; a < 3; ++a) {
        std::int64_t fwd = idx, bwd = idx;
        real scale = 0.5;
        if (pos[a] == 0) {
          fwd = idx + strides[a];
          scale = 1.0;
        } else if (pos[a] == extent[a] - 1) {
          bwd = idx - strides[a];
          scale = 1.0;
        } else {
          fwd = idx + strides[a];
          bwd = idx - strides[a];
        }
        const real* uf = phi.vec(fwd);
        const real* ub = phi.vec(bwd);
        for (int comp = 0; comp < 3; ++comp) m[3 * comp + a] = scale * (uf[comp] - ub[comp]);
      }
    }
  });
  return out;
}

Volume normalize_intensity(const Volume& v) {
  Volume out = v;
  if (v.data.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(v.data.begin(), v.data.end());
  const real lo = *lo_it, hi = *hi_it;
  if (hi <= lo) {
    std::fill(out.data.begin(), out.data.end(), real(0));
    return out;
  }
  const real inv = 1.0 / (hi - lo);
  for (real& x : out.data) x = (x - lo) * inv;
  return out;
}

}  // namespace dsir
