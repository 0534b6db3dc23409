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
#ifndef DSIR_TESTS_SUPPORT_HPP
#define DSIR_TESTS_SUPPORT_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "dsir/rng.hpp"
#include "dsir/tensor.hpp"
#include "dsir/volume.hpp"

namespace dsir::test {

inline Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, real lo = -1,
                            real hi = 1, bool requires_grad = true) {
  Tensor t(shape, 0, requires_grad);
  for (auto& v : t.value()) v = rng.uniform(lo, hi);
  return t;
}

inline Volume random_volume(Dims dims, Rng& rng, real lo = 0, real hi = 1) {
  Volume v(dims);
  for (auto& x : v.data) x = rng.uniform(lo, hi);
  return v;
}

// Central finite differences of a scalar function against the gradient
// accumulated into `param` by one backward pass of `loss_fn`. Returns
// the max per-component relative error |fd - an| / max(tiny, |fd|+|an|).
inline real gradient_check(Tensor& param, const std::function<Tensor()>& loss_fn,
                           real h = 1e-5) {
  param.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  const std::vector<real> analytic = param.grad();

  real worst = 0;
  for (std::size_t i = 0; i < param.value().size(); ++i) {
    const real saved = param.value()[i];
    param.value()[i] = saved + h;
    const real f_plus = loss_fn().item();
    param.value()[i] = saved - h;
    const real f_minus = loss_fn().item();
    param.value()[i] = saved;
    const real fd = (f_plus - f_minus) / (2 * h);
    const real denom = std::max(real(1e-6), std::abs(fd) + std::abs(analytic[i]));
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

// Same idea for plain-buffer objective functions (registration metrics).
inline real gradient_check_buffer(std::vector<real>& param,
                                  const std::function<real()>& value_fn,
                                  const std::vector<real>& analytic, real h = 1e-5) {
  real worst = 0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const real saved = param[i];
    param[i] = saved + h;
    const real f_plus = value_fn();
    param[i] = saved - h;
    const real f_minus = value_fn();
    param[i] = saved;
    const real fd = (f_plus - f_minus) / (2 * h);
    const real denom = std::max(real(1e-6), std::abs(fd) + std::abs(analytic[i]));
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace dsir::test

#endif  // DSIR_TESTS_SUPPORT_HPP
