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
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dsir/checkpoint.hpp"
#include "dsir/optimizer.hpp"
#include "dsir/tensor.hpp"
#include "support.hpp"

using namespace dsir;

TEST_CASE("conv3d: identity and zero kernels") {
  Rng rng(1);
  Tensor x = test::random_tensor({1, 4, 4, 4}, rng, -1, 1, false);
  Tensor k({1, 1, 3, 3, 3}, 0, false);
  k.value()[13] = 1.0;  // centre tap
  Tensor b({1}, 0, false);
  Tensor y = conv3d(x, k, b);
  for (std::size_t i = 0; i < x.value().size(); ++i) CHECK(y.value()[i] == x.value()[i]);

  Tensor kz({2, 1, 3, 3, 3}, 0, false);
  Tensor bz({2}, 0, false);
  Tensor z = conv3d(x, kz, bz);
  for (const real v : z.value()) CHECK(v == 0.0);

  Tensor bad_k({2, 3, 3, 3, 3}, 0, false);
  CHECK_THROWS_AS(conv3d(x, bad_k, bz), std::invalid_argument);
}

TEST_CASE("conv3d: finite-difference gradients for input, kernel, bias") {
  Rng rng(2);
  Tensor x = test::random_tensor({1, 4, 4, 4}, rng);
  Tensor k = test::random_tensor({2, 1, 3, 3, 3}, rng, -0.5, 0.5);
  Tensor b = test::random_tensor({2}, rng, -0.2, 0.2);
  Tensor probe = test::random_tensor({2, 4, 4, 4}, rng, -1, 1, false);

  auto loss_fn = [&]() { return sum(mul(conv3d(x, k, b), probe)); };
  CHECK(test::gradient_check(x, loss_fn) < 1e-4);
  CHECK(test::gradient_check(k, loss_fn) < 1e-4);
  CHECK(test::gradient_check(b, loss_fn) < 1e-4);
}

TEST_CASE("leaky_relu: values and gradient") {
  Tensor x = Tensor::from_data({2}, {2.0, -1.0}, false);
  Tensor y = leaky_relu(x, 0.2);
  CHECK(y.value()[0] == doctest::Approx(2.0));
  CHECK(y.value()[1] == doctest::Approx(-0.2));
  CHECK_THROWS_AS(leaky_relu(x, 1.5), std::invalid_argument);

  Rng rng(3);
  Tensor t({3, 3, 3}, 0, true);
  for (auto& v : t.value()) {
    do {
      v = rng.uniform(-1, 1);
    } while (std::abs(v) < 1e-3);  // keep clear of the kink
  }
  auto loss_fn = [&]() { return sum(mul(leaky_relu(t, 0.2), leaky_relu(t, 0.2))); };
  CHECK(test::gradient_check(t, loss_fn) < 1e-4);
}

TEST_CASE("blurpool3d: shape, constants, impulse weights") {
  Tensor c({1, 8, 8, 8}, 0.7, false);
  Tensor y = blurpool3d(c);
  CHECK(y.shape() == std::vector<std::int64_t>{1, 4, 4, 4});
  for (const real v : y.value()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

  // impulse at an interior odd position: output is the product of 1D
  // binomial weights at the sampled (even) positions
  Tensor imp({1, 8, 8, 8}, 0, false);
  imp.value()[(3 * 8 + 3) * 8 + 3] = 1.0;
  Tensor p = blurpool3d(imp);
  auto w1 = [](int delta) { return delta == 0 ? 0.5 : (std::abs(delta) == 1 ? 0.25 : 0.0); };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) {
        const real expect = w1(2 * i - 3) * w1(2 * j - 3) * w1(2 * k - 3);
        CHECK(p.value()[(i * 4 + j) * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
      }

  Tensor thin({1, 1, 4, 4}, 0, false);
  CHECK_THROWS_AS(blurpool3d(thin), std::invalid_argument);
}

TEST_CASE("blurpool3d: finite-difference gradient") {
  Rng rng(4);
  Tensor x = test::random_tensor({2, 5, 4, 4}, rng);
  Tensor probe = test::random_tensor({2, 3, 2, 2}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(blurpool3d(x), probe)); };
  CHECK(test::gradient_check(x, loss_fn) < 1e-4);
}

TEST_CASE("trilinear_resize: identity, constants, gradient") {
  Rng rng(5);
  Tensor x = test::random_tensor({2, 3, 3, 3}, rng, -1, 1, false);
  Tensor same = trilinear_resize(x, 3, 3, 3);
  for (std::size_t i = 0; i < x.value().size(); ++i)
    CHECK(same.value()[i] == doctest::Approx(x.value()[i]).epsilon(1e-12));

  Tensor c({1, 4, 4, 4}, 1.25, false);
  Tensor up = trilinear_resize(c, 7, 5, 6);
  for (const real v : up.value()) CHECK(v == doctest::Approx(1.25).epsilon(1e-12));

  Tensor g = test::random_tensor({1, 3, 3, 3}, rng);
  Tensor probe = test::random_tensor({1, 5, 5, 5}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(trilinear_resize(g, 5, 5, 5), probe)); };
  CHECK(test::gradient_check(g, loss_fn) < 1e-4);

  CHECK_THROWS_AS(trilinear_resize(x, 0, 3, 3), std::invalid_argument);
}

TEST_CASE("linear: identity, known product, gradient") {
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, false);
  Tensor wi = Tensor::from_data({2, 2}, {1, 0, 0, 1}, false);
  Tensor b0({2}, 0, false);
  Tensor y = linear(x, wi, b0);
  for (std::size_t i = 0; i < x.value().size(); ++i) CHECK(y.value()[i] == x.value()[i]);

  Tensor v = Tensor::from_data({2}, {1, 2}, false);
  Tensor w = Tensor::from_data({2, 2}, {1, 1, 0, 1}, false);
  Tensor z = linear(v, w, b0);
  CHECK(z.value()[0] == doctest::Approx(3.0));
  CHECK(z.value()[1] == doctest::Approx(2.0));

  Rng rng(6);
  Tensor xt = test::random_tensor({3, 4}, rng);
  Tensor wt = test::random_tensor({2, 4}, rng);
  Tensor bt = test::random_tensor({2}, rng);
  Tensor probe = test::random_tensor({3, 2}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(linear(xt, wt, bt), probe)); };
  CHECK(test::gradient_check(xt, loss_fn) < 1e-4);
  CHECK(test::gradient_check(wt, loss_fn) < 1e-4);
  CHECK(test::gradient_check(bt, loss_fn) < 1e-4);

  Tensor bad_w = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, false);
  CHECK_THROWS_AS(linear(xt, bad_w, bt), std::invalid_argument);
}

TEST_CASE("backward: seeds, accumulation, linearity") {
  Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
  Tensor s = sum(x);
  backward(s);
  for (const real g : x.grad()) CHECK(g == 1.0);
  backward(s);
  for (const real g : x.grad()) CHECK(g == 2.0);

  Tensor y = Tensor::from_data({1}, {3.0}, true);
  Tensor loss = sum(mul(y, y));
  y.zero_grad();
  backward(loss);
  CHECK(y.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

  CHECK_THROWS_AS(backward(x), std::invalid_argument);  // non-scalar

  // gradient of a sum of sub-losses equals sum of separate gradients
  Rng rng(8);
  Tensor t = test::random_tensor({6}, rng);
  Tensor a = test::random_tensor({6}, rng, -1, 1, false);
  Tensor b = test::random_tensor({6}, rng, -1, 1, false);
  t.zero_grad();
  backward(add(sum(mul(t, a)), sum(mul(t, b))));
  const std::vector<real> combined = t.grad();
  t.zero_grad();
  backward(sum(mul(t, a)));
  const std::vector<real> ga = t.grad();
  t.zero_grad();
  backward(sum(mul(t, b)));
  const std::vector<real> gb = t.grad();
  for (std::size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-10));
}

TEST_CASE("gather_vectors and concat_channels round trip gradients") {
  Rng rng(12);
  Tensor x = test::random_tensor({3, 2, 2, 2}, rng);
  std::vector<std::int64_t> idx{0, 3, 5};
  Tensor rows = gather_vectors(x, idx);
  CHECK(rows.shape() == std::vector<std::int64_t>{3, 3});
  CHECK(rows.value()[0 * 3 + 1] == x.value()[1 * 8 + 0]);

  Tensor probe = test::random_tensor({3, 3}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(gather_vectors(x, idx), probe)); };
  CHECK(test::gradient_check(x, loss_fn) < 1e-4);

  Tensor a = test::random_tensor({2, 2, 2, 2}, rng);
  Tensor b = test::random_tensor({1, 2, 2, 2}, rng);
  Tensor cat = concat_channels(a, b);
  CHECK(cat.shape() == std::vector<std::int64_t>{3, 2, 2, 2});
  Tensor probe2 = test::random_tensor({3, 2, 2, 2}, rng, -1, 1, false);
  auto loss2 = [&]() { return sum(mul(concat_channels(a, b), probe2)); };
  CHECK(test::gradient_check(a, loss2) < 1e-4);
  CHECK(test::gradient_check(b, loss2) < 1e-4);
}

TEST_CASE("collapse_channels: value and gradients") {
  Rng rng(13);
  Tensor x = test::random_tensor({3, 2, 2, 2, 4}, rng);
  Tensor w = test::random_tensor({3}, rng);
  Tensor b = test::random_tensor({1}, rng);
  Tensor y = collapse_channels(x, w, b);
  CHECK(y.shape() == std::vector<std::int64_t>{4, 2, 2, 2});
  // spot check one element: out[t=1, voxel 5]
  real expect = b.value()[0];
  for (int c = 0; c < 3; ++c) expect += w.value()[c] * x.value()[(c * 8 + 5) * 4 + 1];
  CHECK(y.value()[1 * 8 + 5] == doctest::Approx(expect).epsilon(1e-12));

  Tensor probe = test::random_tensor({4, 2, 2, 2}, rng, -1, 1, false);
  auto loss_fn = [&]() { return sum(mul(collapse_channels(x, w, b), probe)); };
  CHECK(test::gradient_check(x, loss_fn) < 1e-4);
  CHECK(test::gradient_check(w, loss_fn) < 1e-4);
  CHECK(test::gradient_check(b, loss_fn) < 1e-4);
}

TEST_CASE("adam_step: zero gradient, first step size, shape errors") {
  std::vector<Tensor> params{Tensor::from_data({2}, {1.0, -2.0}, true)};
  params[0].zero_grad();
  OptimizerState state;
  state.hyper.lr = 0.1;
  state.init(params);
  adam_step(state, params);
  CHECK(params[0].value()[0] == doctest::Approx(1.0));
  CHECK(params[0].value()[1] == doctest::Approx(-2.0));

  std::vector<Tensor> p2{Tensor::from_data({1}, {0.0}, true)};
  p2[0].zero_grad();
  p2[0].grad()[0] = 1.0;
  OptimizerState s2;
  s2.hyper.lr = 0.1;
  s2.init(p2);
  adam_step(s2, p2);
  CHECK(p2[0].value()[0] == doctest::Approx(-0.1).epsilon(1e-6));

  std::vector<Tensor> p3{Tensor::from_data({3}, {0, 0, 0}, true)};
  CHECK_THROWS_AS(adam_step(s2, p3), std::invalid_argument);
}

TEST_CASE("checkpoint: bit-exact round trip") {
  Checkpoint ckpt;
  ckpt.metadata = {{"c_h", "8"}, {"note", "fixture"}};
  Rng rng(14);
  ckpt.params.emplace_back("layer.weight", test::random_tensor({2, 3}, rng, -2, 2, false));
  ckpt.params.emplace_back("layer.bias", test::random_tensor({3}, rng, -1, 1, false));

  const std::string p1 = "ckpt_roundtrip_a.bin";
  const std::string p2 = "ckpt_roundtrip_b.bin";
  save_checkpoint(ckpt, p1);
  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.metadata == ckpt.metadata);
  REQUIRE(loaded.params.size() == 2);
  CHECK(loaded.params[0].second.shape() == ckpt.params[0].second.shape());
  save_checkpoint(loaded, p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());
  std::remove(p1.c_str());
  std::remove(p2.c_str());

  CHECK_THROWS_AS(load_checkpoint("does_not_exist.bin"), std::runtime_error);
}
