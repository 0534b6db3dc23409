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
#ifndef DSIR_PHANTOM_HPP
#define DSIR_PHANTOM_HPP

#include <cstdint>
#include <utility>

#include "dsir/metrics.hpp"
#include "dsir/volume.hpp"

namespace dsir {

// Synthetic labelled volume: smooth background (0), ellipsoidal organ
// (1) containing a spherical tumour (2), and a curved vessel tube (3).
struct Phantom {
  Volume intensity;   // [0,1]
  LabelVolume labels;
  std::uint64_t seed = 0;
};

Phantom generate_phantom(std::uint64_t seed, Dims dims);

// Gaussian-smoothed random field rescaled so the maximum displacement
// magnitude equals `amplitude`; regenerated until fold-free (at most 20
// attempts).
DisplacementField synth_deformation(std::uint64_t seed, Dims dims, double amplitude,
                                    double smoothness_sigma);

// The phantom intensity paired with a contrast-inverted re-mapping of
// itself (forced Bézier inversion plus mild noise); geometry untouched.
std::pair<Volume, Volume> make_modality_pair(const Phantom& phantom, std::uint64_t seed);

}  // namespace dsir

#endif  // DSIR_PHANTOM_HPP
