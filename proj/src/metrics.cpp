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
#include "dsir/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "dsir/descriptors.hpp"
#include "dsir/parallel.hpp"

namespace dsir {

void LabelVolume::rebuild_legend() {
  std::set<int> seen;
  for (const auto l : data) seen.insert(l);
  legend.assign(seen.begin(), seen.end());
}

BinaryMask LabelVolume::mask_for(int label) const {
  BinaryMask mask(dims);
  for (std::size_t i = 0; i < data.size(); ++i) mask.data[i] = data[i] == label ? 1 : 0;
  return mask;
}

LabelVolume warp_labels(const LabelVolume& labels, const DisplacementField& phi) {
  if (!(labels.dims == phi.dims))
    throw std::invalid_argument("warp_labels: dims differ");
  LabelVolume out(labels.dims, labels.spacing);
  const Dims dm = labels.dims;
  parallel_chunks(dm.voxels(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % dm.d);
      const int j = static_cast<int>((idx / dm.d) % dm.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
      const real* u = phi.vec(idx);
      const int si = std::clamp(static_cast<int>(std::lround(i + u[0])), 0, dm.h - 1);
      const int sj = std::clamp(static_cast<int>(std::lround(j + u[1])), 0, dm.w - 1);
      const int sk = std::clamp(static_cast<int>(std::lround(k + u[2])), 0, dm.d - 1);
      out.data[idx] = labels.data[(static_cast<std::int64_t>(si) * dm.w + sj) * dm.d + sk];
    }
  });
  out.legend = labels.legend;
  return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  if (!(a.dims == b.dims)) throw std::invalid_argument("dice: dims differ");
  std::int64_t na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i] != 0;
    nb += b.data[i] != 0;
    inter += (a.data[i] != 0 && b.data[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

namespace {

std::vector<std::array<double, 3>> surface_points(const BinaryMask& mask, Spacing sp) {
  const Dims dm = mask.dims;
  std::vector<std::array<double, 3>> pts;
  auto inside = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= dm.h || j >= dm.w || k >= dm.d) return false;
    return mask.data[(static_cast<std::int64_t>(i) * dm.w + j) * dm.d + k] != 0;
  };
  for (int i = 0; i < dm.h; ++i)
    for (int j = 0; j < dm.w; ++j)
      for (int k = 0; k < dm.d; ++k) {
        if (!inside(i, j, k)) continue;
        const bool boundary = !inside(i - 1, j, k) || !inside(i + 1, j, k) ||
                              !inside(i, j - 1, k) || !inside(i, j + 1, k) ||
                              !inside(i, j, k - 1) || !inside(i, j, k + 1);
        if (boundary) pts.push_back({i * sp.sx, j * sp.sy, k * sp.sz});
      }
  return pts;
}

void directed_distances(const std::vector<std::array<double, 3>>& from,
                        const std::vector<std::array<double, 3>>& to,
                        std::vector<double>& out) {
  const std::size_t base = out.size();
  out.resize(base + from.size());
  parallel_chunks(static_cast<std::int64_t>(from.size()), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = from[i][0] - q[0];
        const double dy = from[i][1] - q[1];
        const double dz = from[i][2] - q[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      out[base + i] = std::sqrt(best);
    }
  });
}

}  // namespace

double hd95(const BinaryMask& a, const BinaryMask& b, Spacing spacing) {
  if (!(a.dims == b.dims)) throw std::invalid_argument("hd95: dims differ");
  if (a.count_true() == 0 || b.count_true() == 0)
    throw std::invalid_argument("hd95: empty mask");
  const auto sa = surface_points(a, spacing);
  const auto sb = surface_points(b, spacing);
  std::vector<double> dists;
  dists.reserve(sa.size() + sb.size());
  directed_distances(sa, sb, dists);
  directed_distances(sb, sa, dists);
  std::sort(dists.begin(), dists.end());
  // nearest-rank percentile
  const std::size_t rank =
      static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(dists.size())));
  return dists[std::max<std::size_t>(rank, 1) - 1];
}

JacobianResult jacobian_folding(const DisplacementField& phi) {
  const MatrixField g = spatial_gradient(phi);
  const Dims dm = phi.dims;
  JacobianResult res{Volume(dm), 0};
  std::int64_t folded = 0, interior = 0;
  for (std::int64_t idx = 0; idx < dm.voxels(); ++idx) {
    const real* m = g.mat(idx);
    // det(I + grad u)
    const real a00 = 1 + m[0], a01 = m[1], a02 = m[2];
    const real a10 = m[3], a11 = 1 + m[4], a12 = m[5];
    const real a20 = m[6], a21 = m[7], a22 = 1 + m[8];
    const real det = a00 * (a11 * a22 - a12 * a21) - a01 * (a10 * a22 - a12 * a20) +
                     a02 * (a10 * a21 - a11 * a20);
    res.determinant.data[idx] = det;
    const int k = static_cast<int>(idx % dm.d);
    const int j = static_cast<int>((idx / dm.d) % dm.w);
    const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
    const bool is_interior = i > 0 && j > 0 && k > 0 && i < dm.h - 1 && j < dm.w - 1 &&
                             k < dm.d - 1;
    if (is_interior) {
      ++interior;
      if (det <= 0) ++folded;
    }
  }
  res.folding_percent =
      interior > 0 ? 100.0 * static_cast<double>(folded) / static_cast<double>(interior) : 0.0;
  return res;
}

Volume similarity_heatmap(const Field& source, const Field& target, int i, int j, int k) {
  if (source.channels != target.channels)
    throw std::invalid_argument("similarity_heatmap: channel counts differ");
  if (i < 0 || j < 0 || k < 0 || i >= source.dims.h || j >= source.dims.w ||
      k >= source.dims.d)
    throw std::invalid_argument("similarity_heatmap: marked voxel outside the source");
  constexpr real kFloor = 1e-12;
  const std::int64_t src_plane = source.dims.voxels();
  const std::int64_t src_idx =
      (static_cast<std::int64_t>(i) * source.dims.w + j) * source.dims.d + k;
  std::vector<real> ref(source.channels);
  real ref_norm2 = 0;
  for (int c = 0; c < source.channels; ++c) {
    ref[c] = source.data[c * src_plane + src_idx];
    ref_norm2 += ref[c] * ref[c];
  }
  const real ref_norm = std::max(std::sqrt(ref_norm2), kFloor);

  Volume out(target.dims, target.spacing);
  const std::int64_t plane = target.dims.voxels();
  parallel_chunks(plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      real dot = 0, n2 = 0;
      for (int c = 0; c < target.channels; ++c) {
        const real t = target.data[c * plane + idx];
        dot += ref[c] * t;
        n2 += t * t;
      }
      out.data[idx] = dot / (ref_norm * std::max(std::sqrt(n2), kFloor));
    }
  });
  return out;
}

Volume rotate_volume(const Volume& v, double angle0_deg, double angle1_deg) {
  const double r0 = angle0_deg * 3.14159265358979323846 / 180.0;
  const double r1 = angle1_deg * 3.14159265358979323846 / 180.0;
  // inverse rotation: sample source at R^-1 (x - c) + c
  const double c0 = std::cos(-r0), s0 = std::sin(-r0);
  const double c1 = std::cos(-r1), s1 = std::sin(-r1);
  // R^-1 = Ry(-r1) * Rx(-r0) with axis0/axis1 the first two voxel axes
  const Dims dm = v.dims;
  const double centre[3] = {(dm.h - 1) / 2.0, (dm.w - 1) / 2.0, (dm.d - 1) / 2.0};
  Volume out(dm, v.spacing);
  parallel_chunks(dm.voxels(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % dm.d);
      const int j = static_cast<int>((idx / dm.d) % dm.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
      const double x0 = i - centre[0];
      const double x1 = j - centre[1];
      const double x2 = k - centre[2];
      // rotate about axis 0 (mixes axes 1,2)
      const double y1 = c0 * x1 - s0 * x2;
      const double y2 = s0 * x1 + c0 * x2;
      const double y0 = x0;
      // rotate about axis 1 (mixes axes 0,2)
      const double z0 = c1 * y0 + s1 * y2;
      const double z2 = -s1 * y0 + c1 * y2;
      const double z1 = y1;
      out.data[idx] = trilinear_sample_plane(v.data.data(), dm, z0 + centre[0], z1 + centre[1],
                                             z2 + centre[2]);
    }
  });
  return out;
}

std::vector<LandscapeRow> loss_landscape(const Volume& fixed, const Volume& moving,
                                         Metric metric, const NetParams* net,
                                         const std::vector<double>& angles, double sigma,
                                         int nmi_bins, double nmi_parzen) {
  if (!(fixed.dims == moving.dims))
    throw std::invalid_argument("loss_landscape: dims differ");
  if (metric == Metric::dns && net == nullptr)
    throw std::invalid_argument("loss_landscape: dns metric needs network parameters");

  const DisplacementField zero(fixed.dims);
  std::vector<LandscapeRow> rows;
  rows.reserve(angles.size() * angles.size());

  NoGradGuard ng;
  Field rep_fixed;
  Field mind_fixed;
  if (metric == Metric::dns) {
    rep_fixed = gaussian_smooth_field(dsir_to_field(net_forward(fixed, *net)), sigma);
  } else if (metric == Metric::mind) {
    mind_fixed = mind(fixed);
  }

  for (const double a0 : angles)
    for (const double a1 : angles) {
      const Volume rotated = rotate_volume(moving, a0, a1);
      double cost = 0;
      switch (metric) {
        case Metric::dns: {
          const Field rep_rot =
              gaussian_smooth_field(dsir_to_field(net_forward(rotated, *net)), sigma);
          cost = similarity_cosine_field(rep_fixed, rep_rot, zero, nullptr);
          break;
        }
        case Metric::mind:
          cost = mind_ssd_field(mind_fixed, mind(rotated), zero, nullptr);
          break;
        case Metric::nmi:
          cost = -nmi(fixed, rotated, zero, nmi_bins, nmi_parzen);
          break;
      }
      rows.push_back({a0, a1, cost});
    }
  return rows;
}

void write_landscape_csv(const std::vector<LandscapeRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open landscape file: " + path);
  os << "angle0,angle1,cost\n";
  for (const auto& r : rows) os << r.angle0 << ',' << r.angle1 << ',' << r.cost << '\n';
}

}  // namespace dsir
