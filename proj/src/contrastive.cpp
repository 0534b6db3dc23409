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
#include "dsir/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dsir/parallel.hpp"

namespace dsir {

BinaryMask foreground_mask(const Volume& v, real threshold) {
  const Volume norm = normalize_intensity(v);
  BinaryMask mask(v.dims);
  for (std::int64_t i = 0; i < v.dims.voxels(); ++i)
    mask.data[i] = norm.data[i] > threshold ? 1 : 0;
  return mask;
}

std::vector<std::int64_t> sample_foreground_indices(const BinaryMask& mask, std::int64_t count,
                                                    Rng& rng) {
  if (count <= 0) throw std::invalid_argument("sample_foreground_indices: count must be > 0");
  std::vector<std::int64_t> pool;
  pool.reserve(mask.data.size());
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(mask.data.size()); ++i)
    if (mask.data[i]) pool.push_back(i);
  if (static_cast<std::int64_t>(pool.size()) < count)
    throw std::invalid_argument("sample_foreground_indices: foreground smaller than sample count");
  // partial Fisher-Yates: the first `count` slots become the sample
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(rng.integer(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

Tensor normalize_rows(const Tensor& x) {
  if (x.shape().size() != 2) throw std::invalid_argument("normalize_rows: input must be [N,C]");
  const std::int64_t n = x.shape()[0];
  const std::int64_t c = x.shape()[1];
  constexpr real kFloor = 1e-12;

  std::vector<real> out(x.value().size());
  parallel_chunks(n, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t r = lo; r < hi; ++r) {
      const real* xr = x.value().data() + r * c;
      real norm2 = 0;
      for (std::int64_t i = 0; i < c; ++i) norm2 += xr[i] * xr[i];
      const real inv = 1 / std::max(std::sqrt(norm2), kFloor);
      real* yr = out.data() + r * c;
      for (std::int64_t i = 0; i < c; ++i) yr[i] = xr[i] * inv;
    }
  });

  return ops::make_result(x.shape(), std::move(out), {x.node()}, [n, c](TensorNode& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    parallel_chunks(n, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t r = lo; r < hi; ++r) {
        const real* xr = px->value.data() + r * c;
        const real* gy = self.grad.data() + r * c;
        real* gx = px->grad.data() + r * c;
        real norm2 = 0;
        for (std::int64_t i = 0; i < c; ++i) norm2 += xr[i] * xr[i];
        const real norm = std::sqrt(norm2);
        if (norm > kFloor) {
          real dot = 0;
          for (std::int64_t i = 0; i < c; ++i) dot += xr[i] * gy[i];
          const real inv = 1 / norm;
          const real inv3 = inv * inv * inv;
          for (std::int64_t i = 0; i < c; ++i)
            gx[i] += gy[i] * inv - xr[i] * dot * inv3;
        } else {
          // below the floor the map is linear in x
          for (std::int64_t i = 0; i < c; ++i) gx[i] += gy[i] / kFloor;
        }
      }
    });
  });
}

namespace {

struct NceContext {
  std::int64_t n = 0, c = 0;
  real tau = 0;
  bool symmetric = false;
  std::vector<real> soft_pos;   // row-stochastic weights over positives
  std::vector<real> soft_anch;  // weights over anchor-side negatives (symmetric only)
};

}  // namespace

Tensor info_nce_loss(const Tensor& anchors, const Tensor& positives, real tau, bool symmetric,
                     InfoNceStats* stats) {
  if (anchors.shape().size() != 2 || positives.shape() != anchors.shape())
    throw std::invalid_argument("info_nce_loss: anchors/positives must share [N,C]");
  const std::int64_t n = anchors.shape()[0];
  const std::int64_t c = anchors.shape()[1];
  if (n < 2) throw std::invalid_argument("info_nce_loss: needs at least 2 samples");
  if (!(tau > 0)) throw std::invalid_argument("info_nce_loss: tau must be positive");

  auto ctx = std::make_shared<NceContext>();
  ctx->n = n;
  ctx->c = c;
  ctx->tau = tau;
  ctx->symmetric = symmetric;
  ctx->soft_pos.assign(static_cast<std::size_t>(n * n), 0);
  if (symmetric) ctx->soft_anch.assign(static_cast<std::size_t>(n * n), 0);

  std::vector<real> row_loss(n, 0), row_pos(n, 0), row_neg(n, 0);
  parallel_chunks(n, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<real> sp(n), sa(symmetric ? n : 0);
    for (std::int64_t i = lo; i < hi; ++i) {
      const real* ai = anchors.value().data() + i * c;
      real mx = -1e300;
      for (std::int64_t j = 0; j < n; ++j) {
        const real* pj = positives.value().data() + j * c;
        real s = 0;
        for (std::int64_t k = 0; k < c; ++k) s += ai[k] * pj[k];
        sp[j] = s;
        mx = std::max(mx, s);
      }
      if (symmetric) {
        for (std::int64_t j = 0; j < n; ++j) {
          if (j == i) {
            sa[j] = -1e300;  // anchor never contrasts with itself
            continue;
          }
          const real* aj = anchors.value().data() + j * c;
          real s = 0;
          for (std::int64_t k = 0; k < c; ++k) s += ai[k] * aj[k];
          sa[j] = s;
          mx = std::max(mx, s);
        }
      }
      real z = 0;
      for (std::int64_t j = 0; j < n; ++j) {
        const real e = std::exp((sp[j] - mx) / tau);
        ctx->soft_pos[i * n + j] = e;
        z += e;
      }
      if (symmetric) {
        for (std::int64_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const real e = std::exp((sa[j] - mx) / tau);
          ctx->soft_anch[i * n + j] = e;
          z += e;
        }
      }
      const real inv_z = 1 / z;
      for (std::int64_t j = 0; j < n; ++j) ctx->soft_pos[i * n + j] *= inv_z;
      if (symmetric)
        for (std::int64_t j = 0; j < n; ++j) ctx->soft_anch[i * n + j] *= inv_z;

      row_loss[i] = -(sp[i] - mx) / tau + std::log(z);
      row_pos[i] = sp[i];
      real neg = 0;
      for (std::int64_t j = 0; j < n; ++j)
        if (j != i) neg += sp[j];
      row_neg[i] = neg / static_cast<real>(n - 1);
    }
  });

  real loss = 0, pos = 0, neg = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    loss += row_loss[i];
    pos += row_pos[i];
    neg += row_neg[i];
  }
  loss /= static_cast<real>(n);
  if (stats) {
    stats->pos_sim_mean = pos / static_cast<real>(n);
    stats->neg_sim_mean = neg / static_cast<real>(n);
  }

  return ops::make_result(
      {1}, {loss}, {anchors.node(), positives.node()}, [ctx](TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pp = self.parents[1];
        const real g0 = self.grad[0];
        const std::int64_t n = ctx->n, c = ctx->c;
        const real scale = g0 / (static_cast<real>(n) * ctx->tau);
        // d loss / d s_ij = (softmax_ij - delta_ij) / (N tau)
        if (pa->requires_grad) {
          pa->ensure_grad();
          parallel_chunks(n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
              real* ga = pa->grad.data() + i * c;
              for (std::int64_t j = 0; j < n; ++j) {
                real w = ctx->soft_pos[i * n + j] - (i == j ? real(1) : real(0));
                if (w != 0) {
                  const real* pj = pp->value.data() + j * c;
                  const real f = scale * w;
                  for (std::int64_t k = 0; k < c; ++k) ga[k] += f * pj[k];
                }
                if (ctx->symmetric && j != i) {
                  const real wa = ctx->soft_anch[i * n + j];
                  if (wa != 0) {
                    const real* aj = pa->value.data() + j * c;
                    const real f = scale * wa;
                    for (std::int64_t k = 0; k < c; ++k) ga[k] += f * aj[k];
                  }
                }
              }
            }
          });
          if (ctx->symmetric) {
            // second endpoint of the anchor-anchor terms, serial to keep
            // the scatter deterministic
            for (std::int64_t i = 0; i < n; ++i) {
              const real* ai = pa->value.data() + i * c;
              for (std::int64_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const real wa = ctx->soft_anch[i * n + j];
                if (wa == 0) continue;
                real* gaj = pa->grad.data() + j * c;
                const real f = scale * wa;
                for (std::int64_t k = 0; k < c; ++k) gaj[k] += f * ai[k];
              }
            }
          }
        }
        if (pp->requires_grad) {
          pp->ensure_grad();
          parallel_chunks(n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t j = lo; j < hi; ++j) {
              real* gp = pp->grad.data() + j * c;
              for (std::int64_t i = 0; i < n; ++i) {
                const real w = ctx->soft_pos[i * n + j] - (i == j ? real(1) : real(0));
                if (w == 0) continue;
                const real* ai = pa->value.data() + i * c;
                const real f = scale * w;
                for (std::int64_t k = 0; k < c; ++k) gp[k] += f * ai[k];
              }
            }
          });
        }
      });
}

Tensor info_nce_loss(const ContrastiveBatch& batch, InfoNceStats* stats) {
  return info_nce_loss(batch.anchors, batch.positives, batch.tau, false, stats);
}

TrainStepResult train_step(const Volume& image, NetParams& params, OptimizerState& opt,
                           const TrainConfig& cfg, Rng& rng) {
  AugmentationConfig acfg;
  acfg.n = cfg.bezier_n;
  acfg.delta = cfg.delta;
  acfg.seed = cfg.seed;
  const BezierTransform tf = sample_transform(acfg, rng);
  const Volume augmented = apply(tf, image);

  const BinaryMask mask = foreground_mask(image, cfg.foreground_threshold);
  std::int64_t n_k = cfg.n_k;
  const std::int64_t available = mask.count_true();
  if (available < n_k) {
    if (!cfg.clamp_sample_count)
      throw std::invalid_argument("train_step: foreground smaller than n_k");
    n_k = available;
  }
  const std::vector<std::int64_t> indices = sample_foreground_indices(mask, n_k, rng);

  Dsir d = net_forward(image, params);
  Dsir d_aug = net_forward(augmented, params);
  Tensor anchors = normalize_rows(gather_vectors(d.t, indices));
  Tensor positives = normalize_rows(gather_vectors(d_aug.t, indices));

  InfoNceStats stats;
  Tensor loss = info_nce_loss(anchors, positives, cfg.tau, cfg.symmetric_negatives, &stats);
  if (!std::isfinite(loss.item())) throw std::runtime_error("train_step: non-finite loss");

  params.zero_grads();
  backward(loss);
  std::vector<Tensor> tensors = params.tensors();
  opt.hyper.lr = cfg.lr;
  adam_step(opt, tensors);

  return TrainStepResult{loss.item(), stats};
}

TrainResult train(const std::vector<Volume>& corpus, const TrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  Rng rng(cfg.seed);
  NetParams params = NetParams::random_init(cfg.net, rng);
  OptimizerState opt;
  opt.hyper.lr = cfg.lr;
  std::vector<Tensor> tensors = params.tensors();
  opt.init(tensors);

  TrainResult result;
  constexpr int kWindow = 20;
  real best_running = 1e300;
  std::int64_t step = 0;

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.integer(i)]);
    for (const std::size_t item : order) {
      const TrainStepResult r = train_step(corpus[item], params, opt, cfg, rng);
      ++step;
      result.trace.push_back({step, r.loss, r.stats.pos_sim_mean, r.stats.neg_sim_mean});

      const std::size_t have = result.trace.size();
      const std::size_t lo = have > kWindow ? have - kWindow : 0;
      real running = 0;
      for (std::size_t t = lo; t < have; ++t) running += result.trace[t].loss;
      running /= static_cast<real>(have - lo);
      if (running < best_running) {
        best_running = running;
        result.best = params.clone();
      }
    }
  }
  result.last = params;
  if (result.best.enc_w.empty()) result.best = params.clone();
  return result;
}

void write_train_trace_csv(const std::vector<TrainTraceRow>& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file: " + path);
  os << "step,loss,pos_sim_mean,neg_sim_mean\n";
  for (const auto& row : trace)
    os << row.step << ',' << row.loss << ',' << row.pos_sim_mean << ',' << row.neg_sim_mean
       << '\n';
}

}  // namespace dsir
