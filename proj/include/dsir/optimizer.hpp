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
#ifndef DSIR_OPTIMIZER_HPP
#define DSIR_OPTIMIZER_HPP

#include <span>
#include <vector>

#include "dsir/tensor.hpp"

namespace dsir {

struct AdamHyper {
  real lr = 1e-4;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter tensors. Moment
// buffers are laid out per parameter; the step counter is shared.
struct OptimizerState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::vector<std::vector<real>> m, v;

  void init(const std::vector<Tensor>& params);
};

// One in-place update p -= lr * m_hat / (sqrt(v_hat) + eps) on raw
// buffers; `step` must already be incremented to the current step.
void adam_apply(const AdamHyper& hyper, std::int64_t step, std::span<real> param,
                std::span<const real> grad, std::vector<real>& m, std::vector<real>& v);

// Applies one Adam step to every tensor using its accumulated .grad.
void adam_step(OptimizerState& state, std::vector<Tensor>& params);

}  // namespace dsir

#endif  // DSIR_OPTIMIZER_HPP
