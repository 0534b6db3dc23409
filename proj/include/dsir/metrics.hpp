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
#ifndef DSIR_METRICS_HPP
#define DSIR_METRICS_HPP

#include <cstdint>
#include <vector>

#include "dsir/registration.hpp"
#include "dsir/volume.hpp"

namespace dsir {

struct LabelVolume {
  Dims dims;
  Spacing spacing;
  std::vector<std::uint8_t> data;
  std::vector<int> legend;  // labels present, ascending

  LabelVolume() = default;
  explicit LabelVolume(Dims dm, Spacing sp = {})
      : dims(dm), spacing(sp), data(static_cast<std::size_t>(dm.voxels()), 0) {}

  void rebuild_legend();
  BinaryMask mask_for(int label) const;
};

// Nearest-neighbour label propagation: out(x) = labels(round(x + phi(x))).
LabelVolume warp_labels(const LabelVolume& labels, const DisplacementField& phi);

// 2|A n B| / (|A| + |B|); two empty masks count as perfectly overlapping.
double dice(const BinaryMask& a, const BinaryMask& b);

// Nearest-rank 95th percentile of the pooled symmetric surface-voxel
// nearest-neighbour distances, in mm. Surfaces are mask voxels with a
// background 6-neighbour (volume borders count as background).
double hd95(const BinaryMask& a, const BinaryMask& b, Spacing spacing);

// det(I + grad u) by central differences; the folding percentage counts
// interior voxels with det <= 0.
struct JacobianResult {
  Volume determinant;
  double folding_percent = 0;
};
JacobianResult jacobian_folding(const DisplacementField& phi);

// Cosine similarity between the source vector at the marked voxel and
// every target vector, as a volume in [-1, 1].
Volume similarity_heatmap(const Field& source, const Field& target, int i, int j, int k);

// M rotated about the volume centre (voxel space, trilinear, border
// replication) by angles in degrees around axes 0 and 1.
Volume rotate_volume(const Volume& v, double angle0_deg, double angle1_deg);

struct LandscapeRow {
  double angle0 = 0;
  double angle1 = 0;
  double cost = 0;
};

// Evaluates the registration cost of the metric at phi = 0 between F
// and rotated copies of M over the angle grid. `net` is required for
// Metric::dns.
std::vector<LandscapeRow> loss_landscape(const Volume& fixed, const Volume& moving,
                                         Metric metric, const NetParams* net,
                                         const std::vector<double>& angles, double sigma = 1.0,
                                         int nmi_bins = 32, double nmi_parzen = 1.0);

void write_landscape_csv(const std::vector<LandscapeRow>& rows, const std::string& path);

}  // namespace dsir

#endif  // DSIR_METRICS_HPP
