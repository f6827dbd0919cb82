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
#ifndef DCSS_SUPERNET_HPP_
#define DCSS_SUPERNET_HPP_

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcss/checkpoint.hpp"
#include "dcss/ops.hpp"
#include "dcss/rng.hpp"
#include "dcss/tensor.hpp"

namespace dcss {

/// Candidate operator: an inverted-bottleneck block parameterized by kernel
/// size and expansion ratio.
struct OperatorConfig {
  int kernel = 3;
  int expansion = 3;

  bool operator==(const OperatorConfig&) const = default;
};

/// Fixed 6-operator space, in tie-break order.
inline constexpr std::array<OperatorConfig, 6> kOperatorSpace = {
    OperatorConfig{3, 3}, OperatorConfig{3, 6}, OperatorConfig{5, 3},
    OperatorConfig{5, 6}, OperatorConfig{7, 3}, OperatorConfig{7, 6}};

std::string op_name(const OperatorConfig& cfg);            // "k3e3"
OperatorConfig op_from_name(const std::string& name);
int op_index(const OperatorConfig& cfg);

/// Structural hyperparameters of the densely connected search space:
/// 4 scales (strides 4..32, widths F..8F) x L layers of fusion modules,
/// with candidate connections from every earlier layer at every scale.
struct SupernetSpec {
  int num_layers = 14;        // L
  int base_width = 8;         // F (desk scale; 64 at paper scale)
  int max_in_degree = 3;      // k, soft in-degree bound
  double channel_ratio = 0.25;  // r, fraction routed through the operators
  int n_paths = 3;            // sampled connections per node per iteration
  int num_classes = 5;

  static constexpr int kNumScales = 4;

  index_t width(int scale) const {
    return static_cast<index_t>(base_width) << scale;
  }
  int stride(int scale) const { return 4 << scale; }
  /// Total candidate connections: 8L(L+1).
  index_t total_edges() const {
    const index_t l = num_layers;
    return 8 * l * (l + 1);
  }

  void validate() const;
  nlohmann::json to_json() const;
  static SupernetSpec from_json(const nlohmann::json& j);
};

/// Position in the graph. Layer 0 is the stem pyramid; layers 1..L are fusion
/// modules. Rendered as "s{scale}_l{layer}" everywhere.
struct NodeId {
  int scale = 0;
  int layer = 0;

  auto operator<=>(const NodeId&) const = default;
};

std::string node_name(const NodeId& id);
NodeId node_from_name(const std::string& name);

/// Incoming edges of node (s,l) are indexed e = 4*l' + s' for l' < l.
inline NodeId edge_source(int edge_index) {
  return NodeId{edge_index % 4, edge_index / 4};
}
inline int edge_index(const NodeId& src) { return 4 * src.layer + src.scale; }
inline int in_degree(int layer) { return 4 * layer; }

/// All candidate connections of the space, destination-major.
std::vector<std::pair<NodeId, NodeId>> list_candidate_edges(int num_layers);

/// Value snapshot of the architecture parameters: one 6-vector of operator
/// logits per mixture layer, one logit per candidate connection.
struct ArchParams {
  int num_layers = 0;
  std::map<NodeId, std::vector<double>> alpha;  // layer >= 1, size 6
  std::map<NodeId, std::vector<double>> beta;   // layer >= 1, size 4*layer

  void validate() const;
};

/// Path sampler settings. tau anneals exponentially from tau_start to tau_end
/// over the search epochs.
struct SamplerConfig {
  double tau_start = 5.0;
  double tau_end = 0.1;
  int n_paths = 3;
};

double anneal_tau(const SamplerConfig& cfg, int epoch, int total_epochs);

/// Draws n_paths distinct incoming edges from softmax(beta / tau). n_paths
/// greater than the in-degree clamps to the in-degree. Returns sorted indices.
std::vector<int> sample_paths(const std::vector<double>& beta, double tau,
                              int n_paths, Rng& rng);

// --- building blocks -------------------------------------------------------

struct Conv2dLayer {
  Tensor weight;  // [Cout, Cin/groups, k, k]
  int stride = 1, padding = 0, groups = 1;

  void init(index_t c_out, index_t c_in, int k, int stride, int groups,
            Rng& rng, bool zero = false);
  Tensor forward(Tape* tape, const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

struct BatchNormLayer {
  Tensor gamma, beta, running_mean, running_var;

  void init(index_t channels, double gamma_init = 1.0);
  Tensor forward(Tape* tape, const Tensor& x, bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

struct ConvBn {
  Conv2dLayer conv;
  BatchNormLayer bn;
  bool relu = true;

  void init(index_t c_out, index_t c_in, int k, int stride, int groups,
            Rng& rng, bool relu_after, double gamma_init = 1.0);
  Tensor forward(Tape* tape, const Tensor& x, bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

/// Inverted bottleneck: 1x1 expand -> depthwise kxk -> 1x1 project, BN+ReLU
/// after the first two stages, BN after the projection, residual input add.
/// The projection BN scale starts at zero so a fresh block is the identity.
struct MBConv {
  OperatorConfig cfg;
  ConvBn expand, depthwise, project;

  void init(const OperatorConfig& cfg, index_t channels, Rng& rng);
  Tensor forward(Tape* tape, const Tensor& x, bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
  index_t param_count() const;
};

/// Shape alignment for one candidate edge: bilinear upsampling or a chain of
/// stride-2 3x3 convolutions for the resolution, then a 1x1 convolution for
/// the width.
struct AlignBranch {
  int up_factor = 1;                // >1 when the source is coarser
  std::vector<ConvBn> downsample;   // one stride-2 conv per octave
  ConvBn channel_proj;

  void init(index_t src_width, index_t dst_width, int src_scale, int dst_scale,
            Rng& rng);
  Tensor forward(Tape* tape, const Tensor& x, bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

/// Softmax-weighted blend of the 6 candidate operators over a frozen channel
/// subset; the remaining channels bypass unchanged (and bit-exactly).
struct MixtureLayer {
  Tensor alpha;                       // [6] operator logits
  std::vector<index_t> mask;          // sorted sampled-channel indices
  std::array<MBConv, 6> ops;          // sized for the masked width

  void init(index_t channels, double channel_ratio, Rng& rng);
  Tensor forward(Tape* tape, const Tensor& input, bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

struct Stem {
  ConvBn conv7;                 // 7x7 stride 2, 32 filters
  std::array<ConvBn, 4> down;   // 3x3 stride 2, widths F..8F

  void init(const SupernetSpec& spec, Rng& rng);
  std::array<Tensor, 4> forward(Tape* tape, const Tensor& images,
                                bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

struct Head {
  ConvBn fuse;            // 3x3 on the concatenated 15F pyramid
  Conv2dLayer classifier; // 1x1 to num_classes

  void init(const SupernetSpec& spec, Rng& rng);
  Tensor forward(Tape* tape, const std::array<Tensor, 4>& finals,
                 bool training) const;
  void collect(const std::string& prefix, NamedTensorList* weights,
               NamedTensorList* state);
};

enum class ForwardMode { kSampled, kFull };

/// The continuously relaxed search space, end to end: stem, L layers x 4
/// scales of fusion modules, prediction head. Alignment branches are created
/// lazily per edge (seeded by edge identity, so instantiation order never
/// changes the weights) and persist once created.
class Supernet {
 public:
  Supernet(const SupernetSpec& spec, std::uint64_t seed);

  /// Sampled mode draws n_paths edges per node from softmax(beta/tau);
  /// full mode aggregates every candidate edge.
  Tensor forward(Tape* tape, const Tensor& images, ForwardMode mode,
                 bool training, double tau = 1.0, Rng* path_rng = nullptr);

  const SupernetSpec& spec() const { return spec_; }

  Tensor alpha(const NodeId& id);
  Tensor beta(const NodeId& id);
  std::vector<Tensor> all_alphas();
  std::vector<Tensor> all_betas();
  ArchParams arch_params() const;
  void set_arch_params(const ArchParams& params);

  /// Convolution weights and norm affines (alpha/beta excluded). The
  /// references stay valid until the next lazy branch instantiation.
  const NamedTensorList& weight_params();
  /// Architecture parameters alpha and beta.
  const NamedTensorList& arch_param_tensors();
  /// Non-trainable state (batch-norm running stats).
  const NamedTensorList& state_tensors();

  index_t param_count();

  /// Creates the alignment branch for an edge if it does not exist yet.
  AlignBranch& branch(const NodeId& dst, int edge);
  bool has_branch(const NodeId& dst, int edge) const;

  MixtureLayer& mixture(const NodeId& id);
  const Stem& stem() const { return stem_; }
  const Head& head() const { return head_; }

  void save(const std::string& path, const nlohmann::json& extra_index = {},
            const NamedTensorList& extra_tensors = {});
  /// Restores weights, arch params and running stats (branches are
  /// instantiated on demand for every branch tensor present in the file).
  static Supernet load(const std::string& path, nlohmann::json* index_out = nullptr,
                       std::map<std::string, Tensor>* all_tensors = nullptr);

  std::uint64_t seed() const { return seed_; }

 private:
  struct Node {
    NodeId id;
    Tensor beta;  // [4*layer]
    MixtureLayer mixture;
    std::map<int, AlignBranch> branches;
  };

  Node& node(const NodeId& id);
  const Node& node(const NodeId& id) const;
  Tensor aggregate_inputs(Tape* tape, Node& nd,
                          const std::vector<std::array<Tensor, 4>>& outputs,
                          const std::vector<int>& selected, bool training);

  void refresh_param_cache();

  SupernetSpec spec_;
  std::uint64_t seed_;
  Stem stem_;
  Head head_;
  std::vector<std::array<Node, 4>> nodes_;  // [layer-1][scale]
  bool params_dirty_ = true;
  NamedTensorList cached_weights_, cached_arch_, cached_state_;
};

/// Reads {spec, arch params} out of a checkpoint without rebuilding the net.
ArchParams arch_params_from_checkpoint(const Checkpoint& ckpt,
                                       SupernetSpec* spec_out = nullptr);

}  // namespace dcss

#endif  // DCSS_SUPERNET_HPP_
