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
#ifndef DSIR_DESCRIPTORS_HPP
#define DSIR_DESCRIPTORS_HPP

#include <vector>

#include "dsir/volume.hpp"

namespace dsir {

// Modality-independent neighbourhood descriptor on raw intensities:
// twelve channels, one per direct-6-NH sqrt(2) offset pair, each
// exp(-D_p / variance) where D_p is the SSD between the 3^3 patches at
// the two pair offsets (border replication) and the variance is the
// mean of the twelve distances floored at 1e-6. Values lie in (0,1].
Field mind(const Volume& v);

// Mean squared difference between mind(F) and the phi-warped mind(M).
real mind_ssd(const Volume& fixed, const Volume& moving, const DisplacementField& phi);
// Same on precomputed descriptor fields; optionally fills d/d phi.
real mind_ssd_field(const Field& fixed_desc, const Field& moving_desc,
                    const DisplacementField& phi, DisplacementField* grad = nullptr);

// Joint intensity statistics from separable cubic B-spline Parzen
// windows of half-width 2*parzen_width bins; per-sample weights are
// renormalised so the total mass stays one voxel each.
struct JointHistogram {
  int bins = 0;
  std::vector<real> joint;       // bins x bins, fixed-axis major
  std::vector<real> marginal_f;  // fixed image
  std::vector<real> marginal_m;  // warped moving image
  real total = 0;                // sum of joint weights (voxel count)
};

JointHistogram joint_histogram(const Volume& fixed, const Volume& moving,
                               const DisplacementField& phi, int bins, real parzen_width);

// (H(F) + H(M o phi)) / H(F, M o phi) in nats. Intensities must be in
// [0,1]; a constant image has no usable marginal entropy and throws.
real nmi(const Volume& fixed, const Volume& moving, const DisplacementField& phi,
         int bins = 32, real parzen_width = 1.0);
// Same value, optionally filling d(nmi)/d phi.
real nmi_with_grad(const Volume& fixed, const Volume& moving, const DisplacementField& phi,
                   int bins, real parzen_width, DisplacementField* grad);

}  // namespace dsir

#endif  // DSIR_DESCRIPTORS_HPP
