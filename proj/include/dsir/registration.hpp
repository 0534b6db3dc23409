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
#ifndef DSIR_REGISTRATION_HPP
#define DSIR_REGISTRATION_HPP

#include <string>
#include <vector>

#include "dsir/structural_net.hpp"
#include "dsir/volume.hpp"

namespace dsir {

enum class Metric { dns, mind, nmi };

Metric metric_from_string(const std::string& name);
std::string metric_name(Metric m);

struct RegistrationConfig {
  Metric metric = Metric::dns;
  int levels = 3;
  std::vector<double> scales{0.5, 0.75, 1.0};
  std::vector<double> learning_rates{1e-2, 5e-3, 3e-3};
  std::vector<int> iterations{100, 80, 50};
  std::vector<double> lambda{0.6, 0.5, 0.4};
  double sigma = 1.0;       // representation smoothing per level
  std::string checkpoint;   // trained network, required for Metric::dns
  int nmi_bins = 32;
  double nmi_parzen = 1.0;

  void validate() const;
};

struct TraceRow {
  int level = 0;
  int iteration = 0;
  real similarity = 0;
  real regularity = 0;
  real total = 0;
};

struct RegistrationResult {
  DisplacementField field;  // full resolution, voxel units
  std::vector<TraceRow> trace;
  double wall_seconds = 0;
};

// Trilinear downsampling of a full-resolution representation to each
// level's grid.
std::vector<Field> dsir_pyramid(const Field& representation, const std::vector<Dims>& level_dims);

// Negated mean cosine similarity between the sigma-smoothed fields, the
// moving one sampled at x + phi(x). Norms floored at 1e-12.
real similarity_dns(const Field& fixed_rep, const Field& moving_rep,
                    const DisplacementField& phi, double sigma);
// Same on pre-smoothed fields, optionally with d/d phi.
real similarity_cosine_field(const Field& fixed_rep, const Field& moving_rep,
                             const DisplacementField& phi, DisplacementField* grad = nullptr);

// Mean squared Frobenius norm of the displacement Jacobian; optional
// gradient accumulated via the adjoint of the difference stencils.
real regularity(const DisplacementField& phi);
real regularity_with_grad(const DisplacementField& phi, DisplacementField* grad);

struct LevelSettings {
  double learning_rate = 1e-2;
  int iterations = 100;
  double lambda = 0.5;
};

// Adam iterations on a dense per-voxel field minimising
// objective + lambda * regularity; returns the best-seen iterate.
// `objective` fills the similarity gradient and returns the value.
using SimilarityObjective =
    std::function<real(const DisplacementField& phi, DisplacementField* grad)>;
DisplacementField optimize_level(const SimilarityObjective& objective,
                                 const DisplacementField& init, const LevelSettings& settings,
                                 int level_index, std::vector<TraceRow>* trace);

// Rescales a field to new dims; displacement values are multiplied by
// the per-axis grid ratio so physical translations are preserved.
DisplacementField upsample_displacement(const DisplacementField& phi, Dims new_dims);

RegistrationResult register_pair(const Volume& fixed, const Volume& moving,
                                 const RegistrationConfig& cfg);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace dsir

#endif  // DSIR_REGISTRATION_HPP
