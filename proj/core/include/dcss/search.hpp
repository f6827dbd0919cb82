/* Copyright 2026 The dcss Authors. All Rights Reserved.

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
#ifndef DCSS_SEARCH_HPP_
#define DCSS_SEARCH_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcss/data.hpp"
#include "dcss/optim.hpp"
#include "dcss/supernet.hpp"

namespace dcss {

struct SearchConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr_w = 0.01;
  double lr_arch = 0.0005;
  double weight_decay_w = 1e-4;
  double momentum_w = 0.9;
  double lambda_alpha = 1e-3;
  double lambda_beta = 1e-3;
  double lambda_con = 1e-3;
  SamplerConfig sampler;
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchConfig from_json(const nlohmann::json& j);
};

// Regularizers over the architecture parameters. All three are non-negative
// and differentiable through the tape:
//   reg_alpha: sum over mixture layers of the operator-weight entropy
//              (zero exactly at a one-hot distribution),
//   reg_beta:  sum over edges of -sigma(beta)*ln(sigma(beta))
//              (pushes connection importances to 0 or 1),
//   reg_con:   sum over nodes of hinge penalties keeping the soft in-degree
//              sum(sigma(beta)) inside [1, k].
Tensor reg_alpha(Tape* tape, const std::vector<Tensor>& alphas);
Tensor reg_beta(Tape* tape, const std::vector<Tensor>& betas);
Tensor reg_con(Tape* tape, const std::vector<Tensor>& betas, int k);

struct Batch {
  Tensor images;   // [B,3,H,W]
  LabelMap labels; // [B,H,W]
};

Batch stack_samples(const std::vector<SegSample>& samples,
                    const std::vector<index_t>& indices);

struct StepMetrics {
  double ce_a = 0.0, ce_b = 0.0;
  double l_alpha = 0.0, l_beta = 0.0, l_con = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_a_ce = 0.0, train_b_ce = 0.0;
  double l_alpha = 0.0, l_beta = 0.0, l_con = 0.0;
  double tau = 0.0;
  double val_miou = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

/// Mutable state of one search run; checkpointable for bit-exact resumption.
struct SearchState {
  Supernet net;
  SgdOptimizer opt_w;
  AdamOptimizer opt_arch;
  index_t iter = 0;    // phase-1 steps taken
  index_t b_pos = 0;   // trainB samples consumed
  int epoch = 0;
  double best_val_miou = -1.0;
  int best_epoch = -1;

  SearchState(const SupernetSpec& spec, const SearchConfig& cfg);
};

/// One alternating update: SGD on the convolutional weights with the trainA
/// batch, then Adam on (alpha, beta) with cross entropy plus the weighted
/// regularizers on the trainB batch. Sampling is redrawn per phase.
StepMetrics search_step(SearchState& state, const SearchConfig& cfg,
                        const Batch& batch_a, const Batch& batch_b, double tau,
                        double lr_w);

/// mIoU of an eval-mode forward function over a sample list.
double evaluate_miou(const std::function<Tensor(const Tensor&)>& forward_eval,
                     const std::vector<SegSample>& samples, int batch_size,
                     int num_classes);

struct SearchResult {
  double best_val_miou = 0.0;  // S-mIoU
  int best_epoch = -1;
  ArchParams best_arch;
  std::vector<EpochMetrics> history;
};

/// Full search: per-epoch alternating steps, tau annealing, validation-mIoU
/// model selection. When out_dir is non-empty, writes metrics.csv plus
/// best.ckpt / last.ckpt (the latter with optimizer state for --resume).
/// resume_dir, when set, restores a previous last.ckpt and continues.
/// stop_after_epochs >= 0 interrupts the run early without changing the
/// schedules (they follow cfg.epochs), so an interrupted-then-resumed run
/// reproduces the uninterrupted one bit for bit.
SearchResult run_search(const Dataset& dataset, const SupernetSpec& spec,
                        const SearchConfig& cfg, const std::string& out_dir = "",
                        const std::string& resume_dir = "",
                        int stop_after_epochs = -1);

}  // namespace dcss

#endif  // DCSS_SEARCH_HPP_
