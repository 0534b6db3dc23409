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
#include "dsir/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

#include "dsir/parallel.hpp"

namespace dsir {

namespace {

std::atomic<std::uint64_t> g_seq{0};

thread_local bool g_grad_enabled = true;

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (const auto e : shape) n *= e;
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Tensor::Tensor(std::vector<std::int64_t> shape, real fill, bool requires_grad) {
  for (const auto e : shape)
    if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent");
  if (shape.size() > 5) throw std::invalid_argument("Tensor: rank > 5");
  node_ = std::make_shared<TensorNode>();
  node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
  node_->seq = g_seq.fetch_add(1);
}

Tensor Tensor::from_data(std::vector<std::int64_t> shape, std::vector<real> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("Tensor: data length does not match shape");
  Tensor t(shape, 0, requires_grad);
  t.value() = std::move(data);
  return t;
}

Tensor Tensor::scalar(real v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

void Tensor::set_requires_grad(bool b) {
  if (!node_) throw std::invalid_argument("Tensor: undefined");
  node_->requires_grad = b;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0);
}

namespace ops {

Tensor make_result(std::vector<std::int64_t> shape, std::vector<real> value,
                   std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = g_seq.fetch_add(1);
  bool track = g_grad_enabled;
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        track = true;
        break;
      }
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward_fn);
  }
  Tensor t;
  t.node() = n;
  return t;
}

}  // namespace ops

// The tape: every node reachable from the loss, in an order where
// parents precede users. Creation-order DFS postorder gives exactly
// that; replaying it reversed visits each node once.
namespace {
struct Tape {
  std::vector<TensorNode*> order;

  void record_from(TensorNode* root) {
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode* p = node->parents[next++].get();
        if (p && p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
};
}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  if (!loss.node()->requires_grad)
    throw std::invalid_argument("backward: loss does not require gradients");

  Tape tape;
  tape.record_from(loss.node().get());

  // Interior adjoints are per-call scratch; leaf gradients accumulate
  // across calls.
  for (TensorNode* n : tape.order) {
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0);
    else n->ensure_grad();
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1;

  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// --- element-wise and reductions --------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<real> out(a.value().size());
  parallel_chunks(a.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) out[i] = a.value()[i] + b.value()[i];
  });
  return ops::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                          [](TensorNode& self) {
                            for (int p = 0; p < 2; ++p) {
                              auto& par = self.parents[p];
                              if (!par->requires_grad) continue;
                              par->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                par->grad[i] += self.grad[i];
                            }
                          });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return ops::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                          [](TensorNode& self) {
                            for (int p = 0; p < 2; ++p) {
                              auto& par = self.parents[p];
                              if (!par->requires_grad) continue;
                              par->ensure_grad();
                              const real sign = p == 0 ? 1 : -1;
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                par->grad[i] += sign * self.grad[i];
                            }
                          });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return ops::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                          [](TensorNode& self) {
                            auto& pa = self.parents[0];
                            auto& pb = self.parents[1];
                            if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                pa->grad[i] += self.grad[i] * pb->value[i];
                            }
                            if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                pb->grad[i] += self.grad[i] * pa->value[i];
                            }
                          });
}

Tensor scale(const Tensor& a, real c) {
  std::vector<real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.value()[i];
  return ops::make_result(a.shape(), std::move(out), {a.node()}, [c](TensorNode& self) {
    auto& pa = self.parents[0];
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += c * self.grad[i];
  });
}

Tensor leaky_relu(const Tensor& x, real slope) {
  if (!(slope > 0 && slope < 1))
    throw std::invalid_argument("leaky_relu: slope must lie in (0,1)");
  std::vector<real> out(x.value().size());
  parallel_chunks(x.numel(), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const real v = x.value()[i];
      out[i] = v > 0 ? v : slope * v;
    }
  });
  return ops::make_result(x.shape(), std::move(out), {x.node()}, [slope](TensorNode& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    parallel_chunks(static_cast<std::int64_t>(self.grad.size()),
                    [&](std::int64_t lo, std::int64_t hi) {
                      for (std::int64_t i = lo; i < hi; ++i)
                        px->grad[i] += self.grad[i] * (px->value[i] > 0 ? real(1) : slope);
                    });
  });
}

Tensor sum(const Tensor& x) {
  real acc = 0;
  for (const real v : x.value()) acc += v;
  return ops::make_result({1}, {acc}, {x.node()}, [](TensorNode& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    const real g = self.grad[0];
    for (auto& gi : px->grad) gi += g;
  });
}

Tensor mean(const Tensor& x) {
  const real inv = real(1) / static_cast<real>(x.numel());
  real acc = 0;
  for (const real v : x.value()) acc += v;
  acc *= inv;
  return ops::make_result({1}, {acc}, {x.node()}, [inv](TensorNode& self) {
    auto& px = self.parents[0];
    if (!px->requires_grad) return;
    px->ensure_grad();
    const real g = self.grad[0] * inv;
    for (auto& gi : px->grad) gi += g;
  });
}

// --- shape / gather ----------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != b.shape().size() || a.shape().size() < 2)
    throw std::invalid_argument("concat_channels: rank mismatch");
  for (std::size_t i = 1; i < a.shape().size(); ++i)
    if (a.shape()[i] != b.shape()[i])
      throw std::invalid_argument("concat_channels: trailing extents differ");
  auto shape = a.shape();
  shape[0] += b.shape()[0];
  std::vector<real> out;
  out.reserve(a.value().size() + b.value().size());
  out.insert(out.end(), a.value().begin(), a.value().end());
  out.insert(out.end(), b.value().begin(), b.value().end());
  const std::size_t na = a.value().size();
  return ops::make_result(std::move(shape), std::move(out), {a.node(), b.node()},
                          [na](TensorNode& self) {
                            auto& pa = self.parents[0];
                            auto& pb = self.parents[1];
                            if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < na; ++i) pa->grad[i] += self.grad[i];
                            }
                            if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = na; i < self.grad.size(); ++i)
                                pb->grad[i - na] += self.grad[i];
                            }
                          });
}

Tensor gather_vectors(const Tensor& x, const std::vector<std::int64_t>& voxel_indices) {
  if (x.shape().size() < 2) throw std::invalid_argument("gather_vectors: rank < 2");
  const std::int64_t channels = x.shape()[0];
  const std::int64_t plane = x.numel() / channels;
  const std::int64_t n = static_cast<std::int64_t>(voxel_indices.size());
  for (const auto idx : voxel_indices)
    if (idx < 0 || idx >= plane) throw std::invalid_argument("gather_vectors: index out of range");
  std::vector<real> out(static_cast<std::size_t>(n * channels));
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < channels; ++c)
      out[r * channels + c] = x.value()[c * plane + voxel_indices[r]];
  auto indices = std::make_shared<std::vector<std::int64_t>>(voxel_indices);
  return ops::make_result(
      {n, channels}, std::move(out), {x.node()}, [indices, channels, plane](TensorNode& self) {
        auto& px = self.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        const std::int64_t n = static_cast<std::int64_t>(indices->size());
        // indices are unique, so rows scatter to disjoint addresses
        parallel_chunks(n, [&](std::int64_t lo, std::int64_t hi) {
          for (std::int64_t r = lo; r < hi; ++r)
            for (std::int64_t c = 0; c < channels; ++c)
              px->grad[c * plane + (*indices)[r]] += self.grad[r * channels + c];
        });
      });
}

// --- conv3d ------------------------------------------------------------------

namespace {

struct ConvDims {
  std::int64_t co, ci, k, h, w, d;
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.shape().size() != 4) throw std::invalid_argument("conv3d: input must be [C,H,W,D]");
  if (kernel.shape().size() != 5)
    throw std::invalid_argument("conv3d: kernel must be [Co,Ci,K,K,K]");
  ConvDims cd;
  cd.ci = x.shape()[0];
  cd.h = x.shape()[1];
  cd.w = x.shape()[2];
  cd.d = x.shape()[3];
  cd.co = kernel.shape()[0];
  cd.k = kernel.shape()[2];
  if (kernel.shape()[1] != cd.ci) throw std::invalid_argument("conv3d: channel mismatch");
  if (kernel.shape()[3] != cd.k || kernel.shape()[4] != cd.k || (cd.k != 1 && cd.k != 3))
    throw std::invalid_argument("conv3d: kernel size must be 1 or 3 cubed");
  if (bias.shape().size() != 1 || bias.shape()[0] != cd.co)
    throw std::invalid_argument("conv3d: bias shape mismatch");
  return cd;
}

// y[co] += w * shift(x[ci], tap) over the zero-padding-valid region.
inline void conv_tap_accumulate(real* y, const real* x, real wgt, std::int64_t h,
                                std::int64_t w, std::int64_t d, int a, int b, int c) {
  const std::int64_t i_lo = std::max<std::int64_t>(0, -a), i_hi = std::min(h, h - a);
  const std::int64_t j_lo = std::max<std::int64_t>(0, -b), j_hi = std::min(w, w - b);
  const std::int64_t k_lo = std::max<std::int64_t>(0, -c), k_hi = std::min(d, d - c);
  for (std::int64_t i = i_lo; i < i_hi; ++i) {
    for (std::int64_t j = j_lo; j < j_hi; ++j) {
      real* yr = y + (i * w + j) * d;
      const real* xr = x + ((i + a) * w + (j + b)) * d + c;
      for (std::int64_t k = k_lo; k < k_hi; ++k) yr[k] += wgt * xr[k];
    }
  }
}

// acc += sum over the valid region of gy[co] * shift(x[ci], tap).
inline real conv_tap_reduce(const real* gy, const real* x, std::int64_t h, std::int64_t w,
                            std::int64_t d, int a, int b, int c) {
  const std::int64_t i_lo = std::max<std::int64_t>(0, -a), i_hi = std::min(h, h - a);
  const std::int64_t j_lo = std::max<std::int64_t>(0, -b), j_hi = std::min(w, w - b);
  const std::int64_t k_lo = std::max<std::int64_t>(0, -c), k_hi = std::min(d, d - c);
  real acc = 0;
  for (std::int64_t i = i_lo; i < i_hi; ++i) {
    for (std::int64_t j = j_lo; j < j_hi; ++j) {
      const real* gr = gy + (i * w + j) * d;
      const real* xr = x + ((i + a) * w + (j + b)) * d + c;
      for (std::int64_t k = k_lo; k < k_hi; ++k) acc += gr[k] * xr[k];
    }
  }
  return acc;
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const ConvDims cd = conv_dims(x, kernel, bias);
  const std::int64_t plane = cd.h * cd.w * cd.d;
  const int r = cd.k == 3 ? 1 : 0;
  std::vector<real> out(static_cast<std::size_t>(cd.co * plane));

  parallel_chunks(cd.co, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t co = lo; co < hi; ++co) {
      real* y = out.data() + co * plane;
      std::fill(y, y + plane, bias.value()[co]);
      for (std::int64_t ci = 0; ci < cd.ci; ++ci) {
        const real* xp = x.value().data() + ci * plane;
        const real* kp = kernel.value().data() + (co * cd.ci + ci) * cd.k * cd.k * cd.k;
        for (int a = -r; a <= r; ++a)
          for (int b = -r; b <= r; ++b)
            for (int c = -r; c <= r; ++c) {
              const real wgt = kp[((a + r) * cd.k + (b + r)) * cd.k + (c + r)];
              if (wgt == 0) continue;
              conv_tap_accumulate(y, xp, wgt, cd.h, cd.w, cd.d, a, b, c);
            }
      }
    }
  });

  return ops::make_result(
      {cd.co, cd.h, cd.w, cd.d}, std::move(out), {x.node(), kernel.node(), bias.node()},
      [cd, r, plane](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pk = self.parents[1];
        auto& pb = self.parents[2];
        const real* gy = self.grad.data();

        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::int64_t co = 0; co < cd.co; ++co) {
            real acc = 0;
            const real* g = gy + co * plane;
            for (std::int64_t i = 0; i < plane; ++i) acc += g[i];
            pb->grad[co] += acc;
          }
        }

        if (pk->requires_grad) {
          pk->ensure_grad();
          parallel_chunks(cd.co, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t co = lo; co < hi; ++co)
              for (std::int64_t ci = 0; ci < cd.ci; ++ci) {
                const real* xp = px->value.data() + ci * plane;
                real* gk = pk->grad.data() + (co * cd.ci + ci) * cd.k * cd.k * cd.k;
                for (int a = -r; a <= r; ++a)
                  for (int b = -r; b <= r; ++b)
                    for (int c = -r; c <= r; ++c)
                      gk[((a + r) * cd.k + (b + r)) * cd.k + (c + r)] +=
                          conv_tap_reduce(gy + co * plane, xp, cd.h, cd.w, cd.d, a, b, c);
              }
          });
        }

        if (px->requires_grad) {
          px->ensure_grad();
          // gradient w.r.t. input is the correlation with the flipped
          // kernel; parallel over input channels keeps writes disjoint
          parallel_chunks(cd.ci, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t ci = lo; ci < hi; ++ci) {
              real* gx = px->grad.data() + ci * plane;
              for (std::int64_t co = 0; co < cd.co; ++co) {
                const real* kp = pk->value.data() + (co * cd.ci + ci) * cd.k * cd.k * cd.k;
                for (int a = -r; a <= r; ++a)
                  for (int b = -r; b <= r; ++b)
                    for (int c = -r; c <= r; ++c) {
                      const real wgt = kp[((a + r) * cd.k + (b + r)) * cd.k + (c + r)];
                      if (wgt == 0) continue;
                      conv_tap_accumulate(gx, self.grad.data() + co * plane, wgt, cd.h, cd.w,
                                          cd.d, -a, -b, -c);
                    }
              }
            }
          });
        }
      });
}

// --- blurpool ----------------------------------------------------------------

namespace {

// 3-tap (1,2,1)/4 blur along `axis` for a [C,H,W,D] buffer, replication
// padding. in != out.
void blur_axis(const real* in, real* out, std::int64_t channels, Dims dm, int axis) {
  const int n = axis == 0 ? dm.h : axis == 1 ? dm.w : dm.d;
  const std::int64_t stride = axis == 0 ? static_cast<std::int64_t>(dm.w) * dm.d
                              : axis == 1 ? dm.d
                                          : 1;
  const std::int64_t plane = dm.voxels();
  const std::int64_t lines_per_channel = plane / n;
  parallel_chunks(channels * lines_per_channel, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t g = lo; g < hi; ++g) {
      const std::int64_t c = g / lines_per_channel;
      const std::int64_t line = g % lines_per_channel;
      std::int64_t base;
      if (axis == 0) {
        base = line;
      } else if (axis == 1) {
        base = (line / dm.d) * (static_cast<std::int64_t>(dm.w) * dm.d) + line % dm.d;
      } else {
        base = line * dm.d;
      }
      base += c * plane;
      for (int p = 0; p < n; ++p) {
        const int pm = p > 0 ? p - 1 : 0;
        const int pp = p < n - 1 ? p + 1 : n - 1;
        out[base + p * stride] = real(0.25) * in[base + pm * stride] +
                                 real(0.5) * in[base + p * stride] +
                                 real(0.25) * in[base + pp * stride];
      }
    }
  });
}

// Adjoint of blur_axis: scatters each output adjoint back through the
// replication-clamped taps.
void blur_axis_adjoint(const real* gout, real* gin, std::int64_t channels, Dims dm, int axis) {
  const int n = axis == 0 ? dm.h : axis == 1 ? dm.w : dm.d;
  const std::int64_t stride = axis == 0 ? static_cast<std::int64_t>(dm.w) * dm.d
                              : axis == 1 ? dm.d
                                          : 1;
  const std::int64_t plane = dm.voxels();
  const std::int64_t lines_per_channel = plane / n;
  parallel_chunks(channels * lines_per_channel, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t g = lo; g < hi; ++g) {
      const std::int64_t c = g / lines_per_channel;
      const std::int64_t line = g % lines_per_channel;
      std::int64_t base;
      if (axis == 0) {
        base = line;
      } else if (axis == 1) {
        base = (line / dm.d) * (static_cast<std::int64_t>(dm.w) * dm.d) + line % dm.d;
      } else {
        base = line * dm.d;
      }
      base += c * plane;
      for (int p = 0; p < n; ++p) {
        const int pm = p > 0 ? p - 1 : 0;
        const int pp = p < n - 1 ? p + 1 : n - 1;
        const real g0 = gout[base + p * stride];
        gin[base + pm * stride] += real(0.25) * g0;
        gin[base + p * stride] += real(0.5) * g0;
        gin[base + pp * stride] += real(0.25) * g0;
      }
    }
  });
}

}  // namespace

Tensor blurpool3d(const Tensor& x) {
  if (x.shape().size() != 4) throw std::invalid_argument("blurpool3d: input must be [C,H,W,D]");
  const std::int64_t channels = x.shape()[0];
  const Dims dm{static_cast<int>(x.shape()[1]), static_cast<int>(x.shape()[2]),
                static_cast<int>(x.shape()[3])};
  if (dm.h < 2 || dm.w < 2 || dm.d < 2)
    throw std::invalid_argument("blurpool3d: spatial extents must be >= 2");
  const Dims od{(dm.h + 1) / 2, (dm.w + 1) / 2, (dm.d + 1) / 2};
  const std::int64_t plane = dm.voxels();
  const std::int64_t out_plane = od.voxels();

  std::vector<real> t0(x.value().size()), t1(x.value().size());
  blur_axis(x.value().data(), t0.data(), channels, dm, 0);
  blur_axis(t0.data(), t1.data(), channels, dm, 1);
  blur_axis(t1.data(), t0.data(), channels, dm, 2);

  std::vector<real> out(static_cast<std::size_t>(channels * out_plane));
  parallel_chunks(channels, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t c = lo; c < hi; ++c)
      for (int i = 0; i < od.h; ++i)
        for (int j = 0; j < od.w; ++j)
          for (int k = 0; k < od.d; ++k)
            out[((c * od.h + i) * od.w + j) * od.d + k] =
                t0[c * plane + ((static_cast<std::int64_t>(2 * i) * dm.w + 2 * j) * dm.d + 2 * k)];
  });

  return ops::make_result(
      {channels, od.h, od.w, od.d}, std::move(out), {x.node()},
      [channels, dm, od, plane, out_plane](TensorNode& self) {
        auto& px = self.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        // adjoint chain: subsample^T then the three blur adjoints
        std::vector<real> g0(static_cast<std::size_t>(channels * plane), 0);
        std::vector<real> g1(static_cast<std::size_t>(channels * plane), 0);
        parallel_chunks(channels, [&](std::int64_t lo, std::int64_t hi) {
          for (std::int64_t c = lo; c < hi; ++c)
            for (int i = 0; i < od.h; ++i)
              for (int j = 0; j < od.w; ++j)
                for (int k = 0; k < od.d; ++k)
                  g0[c * plane +
                     ((static_cast<std::int64_t>(2 * i) * dm.w + 2 * j) * dm.d + 2 * k)] =
                      self.grad[((c * od.h + i) * od.w + j) * od.d + k];
        });
        blur_axis_adjoint(g0.data(), g1.data(), channels, dm, 2);
        std::fill(g0.begin(), g0.end(), real(0));
        blur_axis_adjoint(g1.data(), g0.data(), channels, dm, 1);
        std::fill(g1.begin(), g1.end(), real(0));
        blur_axis_adjoint(g0.data(), g1.data(), channels, dm, 0);
        for (std::size_t i = 0; i < g1.size(); ++i) px->grad[i] += g1[i];
      });
}

// --- trilinear resize ---------------------------------------------------------

namespace {
inline real resize_coord(int out_i, int out_n, int in_n) {
  if (out_n == 1) return real(0.5) * (in_n - 1);
  return static_cast<real>(out_i) * (in_n - 1) / (out_n - 1);
}
}  // namespace

Tensor trilinear_resize(const Tensor& x, int h, int w, int d) {
  if (x.shape().size() != 4)
    throw std::invalid_argument("trilinear_resize: input must be [C,H,W,D]");
  if (h <= 0 || w <= 0 || d <= 0)
    throw std::invalid_argument("trilinear_resize: non-positive dims");
  const std::int64_t channels = x.shape()[0];
  const Dims in{static_cast<int>(x.shape()[1]), static_cast<int>(x.shape()[2]),
                static_cast<int>(x.shape()[3])};
  const Dims od{h, w, d};
  const std::int64_t in_plane = in.voxels();
  const std::int64_t out_plane = od.voxels();

  std::vector<real> out(static_cast<std::size_t>(channels * out_plane));
  parallel_chunks(out_plane, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const int k = static_cast<int>(idx % od.d);
      const int j = static_cast<int>((idx / od.d) % od.w);
      const int i = static_cast<int>(idx / (static_cast<std::int64_t>(od.d) * od.w));
      const real p0 = resize_coord(i, od.h, in.h);
      const real p1 = resize_coord(j, od.w, in.w);
      const real p2 = resize_coord(k, od.d, in.d);
      for (std::int64_t c = 0; c < channels; ++c)
        out[c * out_plane + idx] =
            trilinear_sample_plane(x.value().data() + c * in_plane, in, p0, p1, p2);
    }
  });

  return ops::make_result(
      {channels, od.h, od.w, od.d}, std::move(out), {x.node()},
      [channels, in, od, in_plane, out_plane](TensorNode& self) {
        auto& px = self.parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        // scatter per channel so writes stay disjoint
        parallel_chunks(channels, [&](std::int64_t clo, std::int64_t chi) {
          for (std::int64_t c = clo; c < chi; ++c) {
            real* gx = px->grad.data() + c * in_plane;
            const real* gy = self.grad.data() + c * out_plane;
            for (std::int64_t idx = 0; idx < out_plane; ++idx) {
              const int k = static_cast<int>(idx % od.d);
              const int j = static_cast<int>((idx / od.d) % od.w);
              const int i = static_cast<int>(idx / (static_cast<std::int64_t>(od.d) * od.w));
              const AxisCell c0 = axis_cell(in.h, resize_coord(i, od.h, in.h));
              const AxisCell c1 = axis_cell(in.w, resize_coord(j, od.w, in.w));
              const AxisCell c2 = axis_cell(in.d, resize_coord(k, od.d, in.d));
              const std::int64_t o0 = in.h > 1 ? static_cast<std::int64_t>(in.w) * in.d : 0;
              const std::int64_t o1 = in.w > 1 ? in.d : 0;
              const std::int64_t o2 = in.d > 1 ? 1 : 0;
              const std::int64_t base =
                  (static_cast<std::int64_t>(c0.i0) * in.w + c1.i0) * in.d + c2.i0;
              const real g = gy[idx];
              const real f0 = c0.f, f1 = c1.f, f2 = c2.f;
              gx[base] += g * (1 - f0) * (1 - f1) * (1 - f2);
              gx[base + o2] += g * (1 - f0) * (1 - f1) * f2;
              gx[base + o1] += g * (1 - f0) * f1 * (1 - f2);
              gx[base + o1 + o2] += g * (1 - f0) * f1 * f2;
              gx[base + o0] += g * f0 * (1 - f1) * (1 - f2);
              gx[base + o0 + o2] += g * f0 * (1 - f1) * f2;
              gx[base + o0 + o1] += g * f0 * f1 * (1 - f2);
              gx[base + o0 + o1 + o2] += g * f0 * f1 * f2;
            }
          }
        });
      });
}

// --- linear -------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.shape().empty()) throw std::invalid_argument("linear: scalar input");
  if (weight.shape().size() != 2) throw std::invalid_argument("linear: weight must be [Co,Ci]");
  const std::int64_t ci = x.shape().back();
  const std::int64_t co = weight.shape()[0];
  if (weight.shape()[1] != ci) throw std::invalid_argument("linear: trailing axis mismatch");
  if (bias.shape().size() != 1 || bias.shape()[0] != co)
    throw std::invalid_argument("linear: bias shape mismatch");
  const std::int64_t rows = x.numel() / ci;

  std::vector<real> out(static_cast<std::size_t>(rows * co));
  parallel_chunks(rows, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t r = lo; r < hi; ++r) {
      const real* xr = x.value().data() + r * ci;
      real* yr = out.data() + r * co;
      for (std::int64_t o = 0; o < co; ++o) {
        const real* wr = weight.value().data() + o * ci;
        real acc = bias.value()[o];
        for (std::int64_t i = 0; i < ci; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
  });

  auto shape = x.shape();
  shape.back() = co;
  return ops::make_result(
      std::move(shape), std::move(out), {x.node(), weight.node(), bias.node()},
      [rows, ci, co](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        if (px->requires_grad) {
          px->ensure_grad();
          parallel_chunks(rows, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t r = lo; r < hi; ++r) {
              const real* gr = self.grad.data() + r * co;
              real* gx = px->grad.data() + r * ci;
              for (std::int64_t o = 0; o < co; ++o) {
                const real g = gr[o];
                const real* wr = pw->value.data() + o * ci;
                for (std::int64_t i = 0; i < ci; ++i) gx[i] += g * wr[i];
              }
            }
          });
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          parallel_chunks(co, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t o = lo; o < hi; ++o) {
              real* gw = pw->grad.data() + o * ci;
              for (std::int64_t r = 0; r < rows; ++r) {
                const real g = self.grad[r * co + o];
                const real* xr = px->value.data() + r * ci;
                for (std::int64_t i = 0; i < ci; ++i) gw[i] += g * xr[i];
              }
            }
          });
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t o = 0; o < co; ++o) pb->grad[o] += self.grad[r * co + o];
        }
      });
}

// --- collapse_channels ---------------------------------------------------------

Tensor collapse_channels(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.shape().size() != 5)
    throw std::invalid_argument("collapse_channels: input must be [C,H,W,D,K]");
  const std::int64_t channels = x.shape()[0];
  const std::int64_t vox = x.shape()[1] * x.shape()[2] * x.shape()[3];
  const std::int64_t k = x.shape()[4];
  if (weight.shape().size() != 1 || weight.shape()[0] != channels)
    throw std::invalid_argument("collapse_channels: weight must be [C]");
  if (bias.shape().size() != 1 || bias.shape()[0] != 1)
    throw std::invalid_argument("collapse_channels: bias must be a scalar");

  std::vector<real> out(static_cast<std::size_t>(k * vox));
  const real b0 = bias.value()[0];
  parallel_chunks(vox, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<real> acc(static_cast<std::size_t>(k));
    for (std::int64_t v = lo; v < hi; ++v) {
      std::fill(acc.begin(), acc.end(), b0);
      for (std::int64_t c = 0; c < channels; ++c) {
        const real wc = weight.value()[c];
        const real* xr = x.value().data() + (c * vox + v) * k;
        for (std::int64_t t = 0; t < k; ++t) acc[t] += wc * xr[t];
      }
      for (std::int64_t t = 0; t < k; ++t) out[t * vox + v] = acc[t];
    }
  });

  return ops::make_result(
      {k, x.shape()[1], x.shape()[2], x.shape()[3]}, std::move(out),
      {x.node(), weight.node(), bias.node()}, [channels, vox, k](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        if (pb->requires_grad) {
          pb->ensure_grad();
          real acc = 0;
          for (const real g : self.grad) acc += g;
          pb->grad[0] += acc;
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          parallel_chunks(channels, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t c = lo; c < hi; ++c) {
              real acc = 0;
              for (std::int64_t v = 0; v < vox; ++v) {
                const real* xr = px->value.data() + (c * vox + v) * k;
                for (std::int64_t t = 0; t < k; ++t) acc += xr[t] * self.grad[t * vox + v];
              }
              pw->grad[c] += acc;
            }
          });
        }
        if (px->requires_grad) {
          px->ensure_grad();
          parallel_chunks(channels, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t c = lo; c < hi; ++c) {
              const real wc = pw->value[c];
              for (std::int64_t v = 0; v < vox; ++v) {
                real* gx = px->grad.data() + (c * vox + v) * k;
                for (std::int64_t t = 0; t < k; ++t) gx[t] += wc * self.grad[t * vox + v];
              }
            }
          });
        }
      });
}

}  // namespace dsir
