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
#ifndef DSIR_TENSOR_HPP
#define DSIR_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dsir/volume.hpp"

namespace dsir {

class Tensor;

// One recorded node of the reverse-mode tape. Nodes form a DAG through
// `parents`; `backward` pushes the node's adjoint into its parents.
struct TensorNode {
  std::vector<std::int64_t> shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order, a valid topological order
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (const auto e : shape) n *= e;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0);
  }
};

// Value-semantic handle on a shared node. Dense row-major storage with
// up to five axes; no broadcasting.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape, real fill = 0, bool requires_grad = false);
  static Tensor from_data(std::vector<std::int64_t> shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::int64_t>& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  std::vector<real>& value() { return node_->value; }
  const std::vector<real>& value() const { return node_->value; }
  std::vector<real>& grad() { return node_->grad; }
  const std::vector<real>& grad() const { return node_->grad; }
  real item() const { return node_->value.at(0); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool b);
  void zero_grad();

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Thread-local autograd switch; operations record tape nodes only when
// enabled and some input requires gradients.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

// Accumulates d(loss)/d(leaf) into every reachable tracked tensor.
// Repeated calls accumulate; callers zero grads between steps.
void backward(const Tensor& loss);

namespace ops {

// Internal helper shared by all operations.
Tensor make_result(std::vector<std::int64_t> shape, std::vector<real> value,
                   std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(TensorNode&)> backward_fn);

}  // namespace ops

// --- element-wise and reduction operations ---------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor leaky_relu(const Tensor& x, real slope);
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// --- shape / gather operations ----------------------------------------------
// Concatenate along axis 0 (the channel axis of [C,H,W,D] tensors).
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Gathers per-voxel channel vectors from a [C,H,W,D] tensor: rows[n][c]
// = x[c, voxel_indices[n]]. Indices must be unique.
Tensor gather_vectors(const Tensor& x, const std::vector<std::int64_t>& voxel_indices);

// --- neural-network operations ----------------------------------------------
// Cross-correlation, zero padding, kernel [C_out,C_in,K,K,K] with K in
// {1, 3}; x is [C_in,H,W,D].
Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// (1,2,1)/4 binomial blur per axis (replication padding), then stride-2
// subsampling. [C,H,W,D] -> [C,ceil(H/2),ceil(W/2),ceil(D/2)].
Tensor blurpool3d(const Tensor& x);
// Aligned-corners trilinear resampling of each channel of [C,H,W,D].
Tensor trilinear_resize(const Tensor& x, int h, int w, int d);
// Affine map along the trailing axis: x[..., C_in], W [C_out,C_in], b [C_out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Collapses the leading channel axis of a [C,H,W,D,K] tensor with a
// C-vector of weights plus scalar bias, emitting [K,H,W,D].
Tensor collapse_channels(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace dsir

#endif  // DSIR_TENSOR_HPP
