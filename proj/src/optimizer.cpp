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
#include "dsir/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "dsir/parallel.hpp"

namespace dsir {

void OptimizerState::init(const std::vector<Tensor>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.value().size(), 0);
    v.emplace_back(p.value().size(), 0);
  }
}

void adam_apply(const AdamHyper& hyper, std::int64_t step, std::span<real> param,
                std::span<const real> grad, std::vector<real>& m, std::vector<real>& v) {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
    throw std::invalid_argument("adam_apply: shape mismatch");
  const real bc1 = 1 - std::pow(hyper.beta1, static_cast<real>(step));
  const real bc2 = 1 - std::pow(hyper.beta2, static_cast<real>(step));
  parallel_chunks(static_cast<std::int64_t>(param.size()),
                  [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t i = lo; i < hi; ++i) {
                      const real g = grad[i];
                      m[i] = hyper.beta1 * m[i] + (1 - hyper.beta1) * g;
                      v[i] = hyper.beta2 * v[i] + (1 - hyper.beta2) * g * g;
                      const real mhat = m[i] / bc1;
                      const real vhat = v[i] / bc2;
                      param[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
                    }
                  });
}

void adam_step(OptimizerState& state, std::vector<Tensor>& params) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state not initialised for these parameters");
  ++state.step;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& t = params[p];
    if (t.grad().size() != t.value().size())
      throw std::invalid_argument("adam_step: parameter has no gradient");
    adam_apply(state.hyper, state.step, t.value(), t.grad(), state.m[p], state.v[p]);
  }
}

}  // namespace dsir
