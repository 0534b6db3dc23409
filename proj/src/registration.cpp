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
#include "dsir/registration.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dsir/descriptors.hpp"
#include "dsir/optimizer.hpp"
#include "dsir/parallel.hpp"

namespace dsir {

Metric metric_from_string(const std::string& name) {
  if (name == "dns") return Metric::dns;
  if (name == "mind") return Metric::mind;
  if (name == "nmi") return Metric::nmi;
  throw std::invalid_argument("unknown metric: " + name);
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::dns: return "dns";
    case Metric::mind: return "mind";
    case Metric::nmi: return "nmi";
  }
  return "?";
}

void RegistrationConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("registration: needs at least one level");
  const std::size_t n = static_cast<std::size_t>(levels);
  if (scales.size() != n || learning_rates.size() != n || iterations.size() != n ||
      lambda.size() != n)
    throw std::invalid_argument("registration: per-level lists must match the level count");
  for (const double s : scales)
    if (!(s > 0 && s <= 1)) throw std::invalid_argument("registration: scales must be in (0,1]");
  for (const double r : learning_rates)
    if (!(r > 0)) throw std::invalid_argument("registration: learning rates must be positive");
  for (const double l : lambda)
    if (l < 0) throw std::invalid_argument("registration: lambda must be non-negative");
  for (const int it : iterations)
    if (it < 0) throw std::invalid_argument("registration: iteration counts must be >= 0");
}

std::vector<Field> dsir_pyramid(const Field& representation,
                                const std::vector<Dims>& level_dims) {
  std::vector<Field> out;
  out.reserve(level_dims.size());
  for (const Dims& dm : level_dims) {
    if (dm == representation.dims) out.push_back(representation);
    else out.push_back(resample_field(representation, dm));
  }
  return out;
}

real similarity_cosine_field(const Field& fixed_rep, const Field& moving_rep,
                             const DisplacementField& phi, DisplacementField* grad) {
  if (!(fixed_rep.dims == moving_rep.dims) || fixed_rep.channels != moving_rep.channels)
    throw std::invalid_argument("similarity_dns: representation fields differ in shape");
  if (!(phi.dims == fixed_rep.dims))
    throw std::invalid_argument("similarity_dns: displacement dims differ");
  constexpr real kFloor = 1e-12;
  const Dims dm = fixed_rep.dims;
  const std::int64_t plane = dm.voxels();
  const int channels = fixed_rep.channels;
  const real inv_n = real(1) / static_cast<real>(plane);

  if (grad && !(grad->dims == dm)) *grad = DisplacementField(dm);

  std::vector<real> partial(static_cast<std::size_t>(dm.h), 0);
  parallel_chunks(dm.h, [&](std::int64_t ilo, std::int64_t ihi) {
    std::vector<real> bv(channels);
    std::vector<real> gb(static_cast<std::size_t>(channels) * 3);
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

        real dot = 0, na2 = 0, nb2 = 0;
        for (int c = 0; c < channels; ++c) {
          const real a = fixed_rep.data[c * plane + idx];
          const real b = trilinear_sample_plane(moving_rep.data.data() + c * plane, dm, p0, p1,
                                                p2, grad ? &gb[3 * c] : nullptr);
          bv[c] = b;
          dot += a * b;
          na2 += a * a;
          nb2 += b * b;
        }
        const real na = std::max(std::sqrt(na2), kFloor);
        const real nb_raw = std::sqrt(nb2);
        const real nb = std::max(nb_raw, kFloor);
        const real cosv = dot / (na * nb);
        acc -= cosv;
        if (grad) {
          real* g = grad->vec(idx);
          real gc[3] = {0, 0, 0};
          const real inv_nanb = 1 / (na * nb);
          const real proj = nb_raw > kFloor ? dot / (na * nb * nb * nb) : 0;
          for (int c = 0; c < channels; ++c) {
            const real a = fixed_rep.data[c * plane + idx];
            const real dcos_db = a * inv_nanb - proj * bv[c];
            gc[0] += dcos_db * gb[3 * c + 0];
            gc[1] += dcos_db * gb[3 * c + 1];
            gc[2] += dcos_db * gb[3 * c + 2];
          }
          g[0] = -gc[0] * inv_n;
          g[1] = -gc[1] * inv_n;
          g[2] = -gc[2] * inv_n;
        }
      }
      partial[i] = acc;
    }
  });
  real total = 0;
  for (const real p : partial) total += p;
  return total * inv_n;
}

real similarity_dns(const Field& fixed_rep, const Field& moving_rep,
                    const DisplacementField& phi, double sigma) {
  const Field fs = gaussian_smooth_field(fixed_rep, sigma);
  const Field ms = gaussian_smooth_field(moving_rep, sigma);
  return similarity_cosine_field(fs, ms, phi, nullptr);
}

real regularity(const DisplacementField& phi) { return regularity_with_grad(phi, nullptr); }

real regularity_with_grad(const DisplacementField& phi, DisplacementField* grad) {
  const Dims dm = phi.dims;
  if (dm.h < 2 || dm.w < 2 || dm.d < 2)
    throw std::invalid_argument("regularity: needs at least 2 voxels per axis");
  const std::int64_t plane = dm.voxels();
  const real inv_n = real(1) / static_cast<real>(plane);
  const std::int64_t strides[3] = {static_cast<std::int64_t>(dm.w) * dm.d, dm.d, 1};
  const int extent[3] = {dm.h, dm.w, dm.d};

  if (grad) {
    if (!(grad->dims == dm)) *grad = DisplacementField(dm);
    std::fill(grad->data.begin(), grad->data.end(), real(0));
  }

  std::vector<real> comp_total(3, 0);
  // components are independent; the adjoint scatter stays inside one
  // component so parallelising over them is race-free
  parallel_chunks(3, [&](std::int64_t clo, std::int64_t chi) {
    for (std::int64_t m = clo; m < chi; ++m) {
      real acc = 0;
      for (std::int64_t idx = 0; idx < plane; ++idx) {
        const int pos[3] = {static_cast<int>(idx / strides[0]),
                            static_cast<int>((idx / dm.d) % dm.w),
                            static_cast<int>(idx % dm.d)};
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
          const real g = scale * (phi.data[3 * fwd + m] - phi.data[3 * bwd + m]);
          acc += g * g;
          if (grad) {
            const real adj = 2 * g * scale * inv_n;
            grad->data[3 * fwd + m] += adj;
            grad->data[3 * bwd + m] -= adj;
          }
        }
      }
      comp_total[m] = acc;
    }
  });
  return (comp_total[0] + comp_total[1] + comp_total[2]) * inv_n;
}

DisplacementField optimize_level(const SimilarityObjective& objective,
                                 const DisplacementField& init, const LevelSettings& settings,
                                 int level_index, std::vector<TraceRow>* trace) {
  DisplacementField phi = init;
  DisplacementField best = init;
  real best_total = std::numeric_limits<real>::infinity();

  AdamHyper hyper;
  hyper.lr = settings.learning_rate;
  std::vector<real> m(phi.data.size(), 0), v(phi.data.size(), 0);
  DisplacementField g_sim(phi.dims), g_reg(phi.dims);
  std::vector<real> g(phi.data.size());

  for (int it = 0; it < settings.iterations; ++it) {
    const real sim = objective(phi, &g_sim);
    const real reg = regularity_with_grad(phi, &g_reg);
    const real total = sim + settings.lambda * reg;
    if (!std::isfinite(total))
      throw std::runtime_error("optimize_level: non-finite loss at level " +
                               std::to_string(level_index) + ", iteration " +
                               std::to_string(it));
    if (trace) trace->push_back({level_index, it, sim, reg, total});
    if (total < best_total) {
      best_total = total;
      best = phi;
    }
    parallel_chunks(static_cast<std::int64_t>(g.size()), [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t t = lo; t < hi; ++t)
        g[t] = g_sim.data[t] + settings.lambda * g_reg.data[t];
    });
    adam_apply(hyper, it + 1, phi.data, g, m, v);
  }
  return settings.iterations == 0 ? init : best;
}

DisplacementField upsample_displacement(const DisplacementField& phi, Dims new_dims) {
  if (!new_dims.positive()) throw std::invalid_argument("upsample_displacement: bad dims");
  if (new_dims == phi.dims) return phi;
  const Dims in = phi.dims;
  DisplacementField out(new_dims);
  // aligned-corners grid ratio keeps physical translations intact
  const real ratio[3] = {
      in.h > 1 ? static_cast<real>(new_dims.h - 1) / (in.h - 1) : real(1),
      in.w > 1 ? static_cast<real>(new_dims.w - 1) / (in.w - 1) : real(1),
      in.d > 1 ? static_cast<real>(new_dims.d - 1) / (in.d - 1) : real(1)};
  // reuse the channel-major resampler per component
  Field comp(3, in);
  const std::int64_t in_plane = in.voxels();
  for (std::int64_t idx = 0; idx < in_plane; ++idx)
    for (int a = 0; a < 3; ++a) comp.data[a * in_plane + idx] = phi.data[3 * idx + a];
  const Field up = resample_field(comp, new_dims);
  const std::int64_t out_plane = new_dims.voxels();
  for (std::int64_t idx = 0; idx < out_plane; ++idx)
    for (int a = 0; a < 3; ++a) out.data[3 * idx + a] = up.data[a * out_plane + idx] * ratio[a];
  return out;
}

namespace {

Dims level_dims(Dims full, double scale) {
  auto one = [scale](int n) {
    return std::max(2, static_cast<int>(std::lround(n * scale)));
  };
  return {one(full.h), one(full.w), one(full.d)};
}

}  // namespace

RegistrationResult register_pair(const Volume& fixed, const Volume& moving,
                                 const RegistrationConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  if (!(fixed.dims == moving.dims))
    throw std::invalid_argument("register: fixed and moving dims differ");

  std::vector<Dims> dims_per_level;
  for (int l = 0; l < cfg.levels; ++l) dims_per_level.push_back(level_dims(fixed.dims, cfg.scales[l]));

  RegistrationResult result;
  DisplacementField phi(dims_per_level[0]);

  if (cfg.metric == Metric::dns) {
    if (cfg.checkpoint.empty())
      throw std::invalid_argument("register: dns metric requires a checkpoint");
    const NetParams params = NetParams::from_checkpoint(load_checkpoint(cfg.checkpoint));
    NoGradGuard ng;
    // representations are computed once at full resolution, then the
    // pyramid is built by downsampling and smoothing (cached per level)
    const Field rep_fixed = dsir_to_field(net_forward(fixed, params), fixed.spacing);
    const Field rep_moving = dsir_to_field(net_forward(moving, params), moving.spacing);
    std::vector<Field> pyr_fixed = dsir_pyramid(rep_fixed, dims_per_level);
    std::vector<Field> pyr_moving = dsir_pyramid(rep_moving, dims_per_level);
    for (int l = 0; l < cfg.levels; ++l) {
      pyr_fixed[l] = gaussian_smooth_field(pyr_fixed[l], cfg.sigma);
      pyr_moving[l] = gaussian_smooth_field(pyr_moving[l], cfg.sigma);
    }
    for (int l = 0; l < cfg.levels; ++l) {
      if (l > 0) phi = upsample_displacement(phi, dims_per_level[l]);
      const Field& a = pyr_fixed[l];
      const Field& b = pyr_moving[l];
      auto objective = [&a, &b](const DisplacementField& p, DisplacementField* g) {
        return similarity_cosine_field(a, b, p, g);
      };
      phi = optimize_level(objective, phi,
                           {cfg.learning_rates[l], cfg.iterations[l], cfg.lambda[l]}, l,
                           &result.trace);
    }
  } else {
    for (int l = 0; l < cfg.levels; ++l) {
      if (l > 0) phi = upsample_displacement(phi, dims_per_level[l]);
      const Volume f_l = dims_per_level[l] == fixed.dims
                             ? fixed
                             : resample_trilinear(fixed, dims_per_level[l]);
      const Volume m_l = dims_per_level[l] == moving.dims
                             ? moving
                             : resample_trilinear(moving, dims_per_level[l]);
      SimilarityObjective objective;
      Field desc_f, desc_m;
      if (cfg.metric == Metric::mind) {
        desc_f = mind(f_l);
        desc_m = mind(m_l);
        objective = [&desc_f, &desc_m](const DisplacementField& p, DisplacementField* g) {
          return mind_ssd_field(desc_f, desc_m, p, g);
        };
      } else {
        const int bins = cfg.nmi_bins;
        const double width = cfg.nmi_parzen;
        objective = [&f_l, &m_l, bins, width](const DisplacementField& p,
                                              DisplacementField* g) {
          const real value = nmi_with_grad(f_l, m_l, p, bins, width, g);
          if (g)
            for (real& x : g->data) x = -x;
          return -value;  // maximise nmi
        };
      }
      phi = optimize_level(objective, phi,
                           {cfg.learning_rates[l], cfg.iterations[l], cfg.lambda[l]}, l,
                           &result.trace);
    }
  }

  result.field = dims_per_level.back() == fixed.dims
                     ? phi
                     : upsample_displacement(phi, fixed.dims);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file: " + path);
  os << "level,iteration,similarity,regularity,total\n";
  for (const auto& row : trace)
    os << row.level << ',' << row.iteration << ',' << row.similarity << ',' << row.regularity
       << ',' << row.total << '\n';
}

}  // namespace dsir
