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
#ifndef DCSS_DECODE_HPP_
#define DCSS_DECODE_HPP_

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dcss/data.hpp"
#include "dcss/search.hpp"
#include "dcss/supernet.hpp"

namespace dcss {

using Edge = std::pair<NodeId, NodeId>;

/// Discrete result of a search: the kept connections plus one operator per
/// retained fusion module.
struct DecodedArchitecture {
  SupernetSpec spec;
  std::map<NodeId, OperatorConfig> chosen_op;  // retained nodes only
  std::set<Edge> kept_edges;
  std::map<Edge, double> edge_beta;  // searched logit of each kept edge
  std::string provenance;

  std::set<NodeId> retained_nodes() const;
  std::map<NodeId, int> in_degrees() const;

  /// Architecture parameters that decode back to exactly this architecture.
  ArchParams implied_arch_params() const;

  void validate() const;
  nlohmann::json to_json() const;
  static DecodedArchitecture from_json(const nlohmann::json& j);
  std::string to_dot() const;
};

/// Argmax over the operator logits of every mixture layer; ties break to the
/// lowest operator index. Tied layers, if any, are reported via `ties`.
std::map<NodeId, OperatorConfig> select_operators(
    const ArchParams& params, std::vector<NodeId>* ties = nullptr);

/// Backward worklist decode: starting from the four final nodes, keep every
/// incoming edge with beta >= 0 and push its source. In strict mode a node
/// without any non-negative incoming edge keeps nothing (the algorithm as
/// printed); otherwise it falls back to its single best edge so every
/// retained node keeps in-degree >= 1.
std::set<Edge> decode_connections(const ArchParams& params, bool strict = false);

DecodedArchitecture decode(const ArchParams& params, const SupernetSpec& spec,
                           bool strict = false,
                           const std::string& provenance = "");

/// Stand-alone network for a decoded architecture: same stem and head as the
/// supernet, one full-width operator per retained node (no channel mask, no
/// mixture), kept edges blended with softmax over their searched betas.
class StandaloneNet {
 public:
  /// Fresh init: all weights re-drawn from the seed.
  StandaloneNet(const DecodedArchitecture& arch, std::uint64_t seed);

  /// Inherits weights and running stats from a searched supernet. Requires
  /// channel_ratio == 1 (otherwise the mixture operators are narrower than
  /// the stand-alone ones).
  static StandaloneNet inherit(const DecodedArchitecture& arch, Supernet& super);

  Tensor forward(Tape* tape, const Tensor& images, bool training);

  const DecodedArchitecture& arch() const { return arch_; }
  NamedTensorList weight_params();
  NamedTensorList state_tensors();
  index_t param_count();

  void save(const std::string& path, const nlohmann::json& extra_index = {});
  static StandaloneNet load(const std::string& path);

 private:
  struct SNode {
    MBConv op;
    std::vector<int> kept;        // incoming edge indices, ascending
    std::vector<double> blend;    // softmax over the kept betas
    std::map<int, AlignBranch> branches;
  };

  StandaloneNet() = default;
  void build(std::uint64_t seed);

  DecodedArchitecture arch_;
  std::uint64_t seed_ = 0;
  Stem stem_;
  Head head_;
  std::map<NodeId, SNode> nodes_;
};

struct TrainConfig {
  int epochs = 60;
  int batch_size = 4;
  double lr = 0.01;
  double momentum = 0.7;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainEpoch {
  int epoch = 0;
  double train_ce = 0.0;
  double val_miou = 0.0;
};

struct TrainResult {
  double best_val_miou = 0.0;  // T-mIoU
  int best_epoch = -1;
  std::vector<TrainEpoch> history;
};

/// Plain cross-entropy training on trainA+trainB with SGD momentum and the
/// polynomial schedule; returns the best validation mIoU and leaves the
/// best-epoch weights in the network. Writes train_metrics.csv and
/// weights.ckpt when out_dir is given.
TrainResult train_standalone(StandaloneNet& net, const Dataset& dataset,
                             const TrainConfig& cfg,
                             const std::string& out_dir = "");

}  // namespace dcss

#endif  // DCSS_DECODE_HPP_
