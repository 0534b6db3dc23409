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
#ifndef DSIR_AUGMENTATION_HPP
#define DSIR_AUGMENTATION_HPP

#include <array>
#include <string>
#include <vector>

#include "dsir/rng.hpp"
#include "dsir/volume.hpp"

namespace dsir {

// Monotone non-linear intensity map built from a Bézier curve with
// endpoints pinned at (0,0) and (1,1), plus an optional contrast
// inversion applied to the input first.
struct BezierTransform {
  std::vector<std::array<real, 2>> control_points;  // ascending in both coords
  bool inverted = false;
  std::uint64_t seed = 0;  // seed of the stream that produced it, for records
  std::vector<real> lut;   // kLutSize samples of intensity -> intensity

  static constexpr int kLutSize = 1024;
};

struct AugmentationConfig {
  int n = 3;           // control-point count minus one
  real delta = 0.5;    // inversion threshold
  std::uint64_t seed = 0;
};

// Bernstein polynomial C(n,i) t^i (1-t)^(n-i).
real bernstein(int i, int n, real t);

// Draws n-1 interior control points uniformly in [0,1]^2, sorts both
// coordinate lists ascending to enforce monotonicity, pins the
// endpoints, rasterises the curve into the lookup table, and samples
// the inversion event p <= delta (never fires for delta == 0).
BezierTransform sample_transform(const AugmentationConfig& cfg, Rng& rng);

// Builds the transform from explicit control points (no randomness).
BezierTransform transform_from_points(std::vector<std::array<real, 2>> interior_points,
                                      bool inverted);

// Lookup of the curve's y at curve-x = v; v is clamped to [0,1].
real bezier_eval(const BezierTransform& tf, real v);

// I'(x) = lut(I(x)) or lut(1 - I(x)) when inverted. Input must be in [0,1].
Volume apply(const BezierTransform& tf, const Volume& image);

// Structured-text record (JSON) for reproducing an augmentation.
std::string serialize_transform(const BezierTransform& tf);
BezierTransform deserialize_transform(const std::string& text);

}  // namespace dsir

#endif  // DSIR_AUGMENTATION_HPP
