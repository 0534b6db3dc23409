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
#include "dsir/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsir/parallel.hpp"

namespace dsir {

namespace {

constexpr real kMindVarianceFloor = 1e-6;

// direct-6-NH offset pairs, same enumeration as the DNS layouts
struct OffsetPair {
  int a[3];
  int b[3];
};

std::vector<OffsetPair> direct_pairs() {
  const int offs[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<OffsetPair> pairs;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int sa = 0; sa < 2; ++sa)
        for (int sb = 0; sb < 2; ++sb) {
          OffsetPair p{};
          for (int t = 0; t < 3; ++t) {
            p.a[t] = offs[2 * a + sa][t];
            p.b[t] = offs[2 * b + sb][t];
          }
          pairs.push_back(p);
        }
  return pairs;
}

inline real clamped_at(const Volume& v, int i, int j, int k) {
  i = std::clamp(i, 0, v.dims.h - 1);
  j = std::clamp(j, 0, v.dims.w - 1);
  k = std::clamp(k, 0, v.dims.d - 1);
  return v.data[v.index(i, j, k)];
}

}  // namespace

Field mind(const Volume& v) {
  if (!v.dims.positive()) throw std::invalid_argument("mind: empty volume");
  const auto pairs = direct_pairs();
  Field out(12, v.dims, v.spacing);
  const std::int64_t plane = v.dims.voxels();
  parallel_chunks(plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % v.dims.d);
      const int j = static_cast<int>((idx / v.dims.d) % v.dims.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(v.dims.d) * v.dims.w));
      real dist[12];
      real sum = 0;
      for (int p = 0; p < 12; ++p) {
        real ssd = 0;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj)
            for (int dk = -1; dk <= 1; ++dk) {
              const real va =
                  clamped_at(v, i + pairs[p].a[0] + di, j + pairs[p].a[1] + dj,
                             k + pairs[p].a[2] + dk);
              const real vb =
                  clamped_at(v, i + pairs[p].b[0] + di, j + pairs[p].b[1] + dj,
                             k + pairs[p].b[2] + dk);
              const real d = va - vb;
              ssd += d * d;
            }
        dist[p] = ssd;
        sum += ssd;
      }
      const real variance = std::max(sum / 12, kMindVarianceFloor);
      for (int p = 0; p < 12; ++p) out.data[p * plane + idx] = std::exp(-dist[p] / variance);
    }
  });
  return out;
}

real mind_ssd_field(const Field& fixed_desc, const Field& moving_desc,
                    const DisplacementField& phi, DisplacementField* grad) {
  if (!(fixed_desc.dims == moving_desc.dims) || fixed_desc.channels != moving_desc.channels)
    throw std::invalid_argument("mind_ssd: descriptor fields differ in shape");
  if (!(phi.dims == fixed_desc.dims))
    throw std::invalid_argument("mind_ssd: displacement dims differ");
  const Dims dm = fixed_desc.dims;
  const std::int64_t plane = dm.voxels();
  const int channels = fixed_desc.channels;
  const real inv_n = real(1) / (static_cast<real>(plane) * channels);

  if (grad && !(grad->dims == dm)) *grad = DisplacementField(dm);
  if (grad) std::fill(grad->data.begin(), grad->data.end(), real(0));

  std::vector<real> partial(static_cast<std::size_t>(dm.h), 0);
  parallel_chunks(dm.h, [&](std::int64_t ilo, std::int64_t ihi) {
    for (std::int64_t i = ilo; i < ihi; ++i) {
      real acc = 0;
      for (std::int64_t jk = 0; jk < static_cast<std::int64_t>(dm.w) * dm.d; ++jk) {
        const std::int64_t idx = i * dm.w * dm.d + jk;
        const int k = static_cast<int>(idx % dm.d);
        const int j = static_cast<int>((idx / dm.d) % dm.w);
        const real* u = phi.vec(idx);
        const real p0 = static_cast<real>(i) + u[0];
        const real p1 = static_cast<real>(j) + u[1];
        const real p2 = static_cast<real>(k) + u[2];
        real gacc[3] = {0, 0, 0};
        for (int c = 0; c < channels; ++c) {
          real gb[3];
          const real b = trilinear_sample_plane(moving_desc.data.data() + c * plane, dm, p0, p1,
                                                p2, grad ? gb : nullptr);
          const real diff = b - fixed_desc.data[c * plane + idx];
          acc += diff * diff;
          if (grad)
            for (int a = 0; a < 3; ++a) gacc[a] += 2 * diff * gb[a];
        }
        if (grad) {
          real* g = grad->vec(idx);
          for (int a = 0; a < 3; ++a) g[a] = gacc[a] * inv_n;
        }
      }
      partial[i] = acc;
    }
  });
  real total = 0;
  for (const real p : partial) total += p;
  return total * inv_n;
}

real mind_ssd(const Volume& fixed, const Volume& moving, const DisplacementField& phi) {
  if (!(fixed.dims == moving.dims)) throw std::invalid_argument("mind_ssd: volume dims differ");
  const Field df = mind(fixed);
  const Field dm = mind(moving);
  return mind_ssd_field(df, dm, phi, nullptr);
}

// --- Parzen-window NMI ---------------------------------------------------------

namespace {

// cubic B-spline and derivative
inline real bspline3(real t) {
  const real a = std::abs(t);
  if (a < 1) return (4 - 6 * a * a + 3 * a * a * a) / 6;
  if (a < 2) {
    const real b = 2 - a;
    return b * b * b / 6;
  }
  return 0;
}

inline real bspline3_deriv(real t) {
  const real a = std::abs(t);
  real d;
  if (a < 1) d = (-12 * a + 9 * a * a) / 6;
  else if (a < 2) d = -(2 - a) * (2 - a) / 2;
  else return 0;
  return t < 0 ? -d : d;
}

struct ParzenSupport {
  int first = 0;
  int count = 0;
  real w[8];   // normalised weights
  real dw[8];  // d w / d s (bin coordinate)
};

// Window around bin coordinate s; weights renormalised so every sample
// deposits exactly unit mass even when the support is truncated or the
// width is not 1.
ParzenSupport parzen_support(real s, int bins, real width) {
  ParzenSupport sup;
  const int lo = std::max(0, static_cast<int>(std::ceil(s - 2 * width)));
  const int hi = std::min(bins - 1, static_cast<int>(std::floor(s + 2 * width)));
  sup.first = lo;
  sup.count = std::min(hi - lo + 1, 8);
  real z = 0, dz = 0;
  for (int t = 0; t < sup.count; ++t) {
    const real arg = (static_cast<real>(lo + t) - s) / width;
    sup.w[t] = bspline3(arg);
    sup.dw[t] = -bspline3_deriv(arg) / width;
    z += sup.w[t];
    dz += sup.dw[t];
  }
  if (z <= 0) {  // fully truncated: all mass on the nearest bin
    sup.first = std::clamp(static_cast<int>(std::lround(s)), 0, bins - 1);
    sup.count = 1;
    sup.w[0] = 1;
    sup.dw[0] = 0;
    return sup;
  }
  const real inv_z = 1 / z;
  for (int t = 0; t < sup.count; ++t) {
    // quotient rule for w/z
    sup.dw[t] = (sup.dw[t] * z - sup.w[t] * dz) * inv_z * inv_z;
    sup.w[t] *= inv_z;
  }
  return sup;
}

void check_intensity_range(const Volume& v, const char* what) {
  for (const real x : v.data)
    if (!(x >= -1e-9 && x <= 1 + 1e-9))
      throw std::invalid_argument(std::string("nmi: ") + what +
                                  " intensities must be normalised to [0,1]");
}

}  // namespace

JointHistogram joint_histogram(const Volume& fixed, const Volume& moving,
                               const DisplacementField& phi, int bins, real parzen_width) {
  if (!(fixed.dims == moving.dims)) throw std::invalid_argument("nmi: volume dims differ");
  if (!(phi.dims == fixed.dims)) throw std::invalid_argument("nmi: displacement dims differ");
  if (bins < 4) throw std::invalid_argument("nmi: needs at least 4 bins");
  if (!(parzen_width > 0)) throw std::invalid_argument("nmi: parzen width must be positive");
  check_intensity_range(fixed, "fixed");
  check_intensity_range(moving, "moving");

  const Dims dm = fixed.dims;
  const std::int64_t plane = dm.voxels();
  const real margin = std::max(real(0), 2 * parzen_width - real(0.5));
  const real scale = (bins - 1) - 2 * margin;
  if (scale <= 0) throw std::invalid_argument("nmi: bins too few for this parzen width");

  JointHistogram hist;
  hist.bins = bins;
  hist.joint.assign(static_cast<std::size_t>(bins) * bins, 0);
  hist.marginal_f.assign(bins, 0);
  hist.marginal_m.assign(bins, 0);

  // fixed chunk count so the merge order (and therefore the float sums)
  // never depends on the thread count
  constexpr int kChunks = 16;
  std::vector<std::vector<real>> local(kChunks);
  for (auto& l : local) l.assign(hist.joint.size(), 0);

  parallel_for(kChunks, [&](std::int64_t chunk) {
    const std::int64_t lo = plane * chunk / kChunks;
    const std::int64_t hi = plane * (chunk + 1) / kChunks;
    auto& acc = local[chunk];
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % dm.d);
      const int j = static_cast<int>((idx / dm.d) % dm.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
      const real* u = phi.vec(idx);
      const real fv = std::clamp(fixed.data[idx], real(0), real(1));
      const real mv = std::clamp(
          trilinear_sample_plane(moving.data.data(), dm, i + u[0], j + u[1], k + u[2]),
          real(0), real(1));
      const ParzenSupport sf = parzen_support(margin + fv * scale, bins, parzen_width);
      const ParzenSupport sm = parzen_support(margin + mv * scale, bins, parzen_width);
      for (int a = 0; a < sf.count; ++a)
        for (int b = 0; b < sm.count; ++b)
          acc[static_cast<std::size_t>(sf.first + a) * bins + (sm.first + b)] +=
              sf.w[a] * sm.w[b];
    }
  });
  for (int chunk = 0; chunk < kChunks; ++chunk)
    for (std::size_t t = 0; t < hist.joint.size(); ++t) hist.joint[t] += local[chunk][t];

  for (int a = 0; a < bins; ++a)
    for (int b = 0; b < bins; ++b) {
      const real w = hist.joint[static_cast<std::size_t>(a) * bins + b];
      hist.marginal_f[a] += w;
      hist.marginal_m[b] += w;
      hist.total += w;
    }
  return hist;
}

namespace {

real entropy(const std::vector<real>& weights, real total) {
  real h = 0;
  for (const real w : weights)
    if (w > 0) {
      const real p = w / total;
      h -= p * std::log(p);
    }
  return h;
}

struct NmiTerms {
  real hf, hm, hj, value;
};

NmiTerms nmi_terms(const JointHistogram& hist) {
  NmiTerms t{};
  t.hf = entropy(hist.marginal_f, hist.total);
  t.hm = entropy(hist.marginal_m, hist.total);
  t.hj = entropy(hist.joint, hist.total);
  if (t.hf < 1e-9 || t.hm < 1e-9)
    throw std::invalid_argument("nmi: degenerate (constant) image, marginal entropy is zero");
  t.value = (t.hf + t.hm) / t.hj;
  return t;
}

}  // namespace

real nmi(const Volume& fixed, const Volume& moving, const DisplacementField& phi, int bins,
         real parzen_width) {
  return nmi_terms(joint_histogram(fixed, moving, phi, bins, parzen_width)).value;
}

real nmi_with_grad(const Volume& fixed, const Volume& moving, const DisplacementField& phi,
                   int bins, real parzen_width, DisplacementField* grad) {
  const JointHistogram hist = joint_histogram(fixed, moving, phi, bins, parzen_width);
  const NmiTerms terms = nmi_terms(hist);
  if (!grad) return terms.value;

  const Dims dm = fixed.dims;
  const std::int64_t plane = dm.voxels();
  const real margin = std::max(real(0), 2 * parzen_width - real(0.5));
  const real scale = (bins - 1) - 2 * margin;
  const real n = hist.total;

  // d nmi / d q(a,b) with q the joint probabilities; constant shifts do
  // not matter because per-sample mass is conserved, but the exact form
  // keeps the finite-difference check tight
  std::vector<real> dq(static_cast<std::size_t>(bins) * bins, 0);
  for (int a = 0; a < bins; ++a)
    for (int b = 0; b < bins; ++b) {
      const real qf = hist.marginal_f[a] / n;
      const real qm = hist.marginal_m[b] / n;
      const real qj = hist.joint[static_cast<std::size_t>(a) * bins + b] / n;
      const real d_hf = qf > 0 ? -(1 + std::log(qf)) : 0;
      const real d_hm = qm > 0 ? -(1 + std::log(qm)) : 0;
      const real d_hj = qj > 0 ? -(1 + std::log(qj)) : 0;
      dq[static_cast<std::size_t>(a) * bins + b] =
          (d_hf + d_hm) / terms.hj - (terms.hf + terms.hm) * d_hj / (terms.hj * terms.hj);
    }

  if (!(grad->dims == dm)) *grad = DisplacementField(dm);
  parallel_chunks(plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % dm.d);
      const int j = static_cast<int>((idx / dm.d) % dm.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(dm.d) * dm.w));
      const real* u = phi.vec(idx);
      real gm[3];
      const real mv_raw =
          trilinear_sample_plane(moving.data.data(), dm, i + u[0], j + u[1], k + u[2], gm);
      const real mv = std::clamp(mv_raw, real(0), real(1));
      const bool clamped = mv_raw <= 0 || mv_raw >= 1;
      const real fv = std::clamp(fixed.data[idx], real(0), real(1));
      const ParzenSupport sf = parzen_support(margin + fv * scale, bins, parzen_width);
      const ParzenSupport sm = parzen_support(margin + mv * scale, bins, parzen_width);
      real ds = 0;  // d nmi / d s_m for this sample
      for (int a = 0; a < sf.count; ++a)
        for (int b = 0; b < sm.count; ++b)
          ds += dq[static_cast<std::size_t>(sf.first + a) * bins + (sm.first + b)] * sf.w[a] *
                sm.dw[b];
      const real factor = clamped ? 0 : ds * scale / n;
      real* g = grad->vec(idx);
      for (int axis = 0; axis < 3; ++axis) g[axis] = factor * gm[axis];
    }
  });
  return terms.value;
}

}  // namespace dsir
