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
#ifndef DSIR_CONTRASTIVE_HPP
#define DSIR_CONTRASTIVE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dsir/augmentation.hpp"
#include "dsir/optimizer.hpp"
#include "dsir/rng.hpp"
#include "dsir/structural_net.hpp"
#include "dsir/tensor.hpp"
#include "dsir/volume.hpp"

namespace dsir {

// Voxels brighter than `threshold` after min-max normalisation.
BinaryMask foreground_mask(const Volume& v, real threshold = 0.01);

// Uniform sample of `count` distinct foreground voxel indices.
std::vector<std::int64_t> sample_foreground_indices(const BinaryMask& mask, std::int64_t count,
                                                    Rng& rng);

// Rows scaled to unit Euclidean norm, denominator floored at 1e-12.
Tensor normalize_rows(const Tensor& x);

// Anchors from the input representation, positives from the augmented
// one at the same voxel indices; negatives for anchor i are the other
// positives j != i.
struct ContrastiveBatch {
  std::vector<std::int64_t> indices;
  Tensor anchors;    // [N, C], unit rows
  Tensor positives;  // [N, C], unit rows
  real tau = 0.07;
};

struct InfoNceStats {
  real pos_sim_mean = 0;
  real neg_sim_mean = 0;
};

// Mean over anchors of -log( exp(s_ii/tau) / sum_j exp(s_ij/tau) ) with
// s = anchors * positives^T, stabilised by row-max subtraction. With
// `symmetric` the denominator also sees the other anchors.
Tensor info_nce_loss(const Tensor& anchors, const Tensor& positives, real tau,
                     bool symmetric = false, InfoNceStats* stats = nullptr);
Tensor info_nce_loss(const ContrastiveBatch& batch, InfoNceStats* stats = nullptr);

struct TrainConfig {
  std::int64_t n_k = 8196;  // sampled vectors per step
  real tau = 0.07;
  int bezier_n = 3;
  real delta = 0.5;
  real lr = 1e-4;
  int epochs = 1;
  std::uint64_t seed = 0;
  real foreground_threshold = 0.01;
  bool symmetric_negatives = false;
  bool clamp_sample_count = false;  // shrink n_k to the foreground size
  NetConfig net;
};

struct TrainTraceRow {
  std::int64_t step = 0;
  real loss = 0;
  real pos_sim_mean = 0;
  real neg_sim_mean = 0;
};

struct TrainStepResult {
  real loss = 0;
  InfoNceStats stats;
};

// One optimisation step: augment, run both forwards, sample a batch,
// backpropagate and apply Adam.
TrainStepResult train_step(const Volume& image, NetParams& params, OptimizerState& opt,
                           const TrainConfig& cfg, Rng& rng);

struct TrainResult {
  NetParams last;
  NetParams best;  // lowest running mean loss
  std::vector<TrainTraceRow> trace;
};

TrainResult train(const std::vector<Volume>& corpus, const TrainConfig& cfg);

void write_train_trace_csv(const std::vector<TrainTraceRow>& trace, const std::string& path);

}  // namespace dsir

#endif  // DSIR_CONTRASTIVE_HPP
