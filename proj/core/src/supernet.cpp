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
#include "dcss/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace dcss {

namespace {
// Sub-stream tags for derived seeds. Weight init must not depend on the order
// modules happen to be created in.
constexpr std::uint64_t kTagStem = 0x01;
constexpr std::uint64_t kTagHead = 0x02;
constexpr std::uint64_t kTagMixture = 0x03;
constexpr std::uint64_t kTagBeta = 0x04;
constexpr std::uint64_t kTagBranch = 0x05;
}  // namespace

std::string op_name(const OperatorConfig& cfg) {
  return cat("k", cfg.kernel, "e", cfg.expansion);
}

OperatorConfig op_from_name(const std::string& name) {
  for (const auto& cfg : kOperatorSpace) {
    if (op_name(cfg) == name) return cfg;
  }
  throw Error(cat("unknown operator '", name, "'"));
}

int op_index(const OperatorConfig& cfg) {
  for (std::size_t i = 0; i < kOperatorSpace.size(); ++i) {
    if (kOperatorSpace[i] == cfg) return static_cast<int>(i);
  }
  throw Error(cat("operator k", cfg.kernel, "e", cfg.expansion,
                  " is not in the search space"));
}

void SupernetSpec::validate() const {
  DCSS_CHECK(num_layers >= 1, "supernet: num_layers must be >= 1");
  DCSS_CHECK(base_width >= 1, "supernet: base_width must be >= 1");
  DCSS_CHECK(max_in_degree >= 1, "supernet: max_in_degree must be >= 1");
  DCSS_CHECK(channel_ratio > 0.0 && channel_ratio <= 1.0,
             "supernet: channel_ratio must be in (0,1], got ", channel_ratio);
  DCSS_CHECK(n_paths >= 1, "supernet: n_paths must be >= 1");
  DCSS_CHECK(num_classes >= 2, "supernet: num_classes must be >= 2");
}

nlohmann::json SupernetSpec::to_json() const {
  return {{"num_layers", num_layers},   {"base_width", base_width},
          {"max_in_degree", max_in_degree}, {"channel_ratio", channel_ratio},
          {"n_paths", n_paths},         {"num_classes", num_classes}};
}

SupernetSpec SupernetSpec::from_json(const nlohmann::json& j) {
  SupernetSpec s;
  s.num_layers = j.at("num_layers").get<int>();
  s.base_width = j.at("base_width").get<int>();
  s.max_in_degree = j.at("max_in_degree").get<int>();
  s.channel_ratio = j.at("channel_ratio").get<double>();
  s.n_paths = j.at("n_paths").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.validate();
  return s;
}

std::string node_name(const NodeId& id) {
  return cat("s", id.scale, "_l", id.layer);
}

NodeId node_from_name(const std::string& name) {
  int scale = -1, layer = -1;
  if (std::sscanf(name.c_str(), "s%d_l%d", &scale, &layer) != 2 || scale < 0 ||
      scale > 3 || layer < 0) {
    throw Error(cat("bad node name '", name, "'"));
  }
  return NodeId{scale, layer};
}

std::vector<std::pair<NodeId, NodeId>> list_candidate_edges(int num_layers) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (int l = 1; l <= num_layers; ++l) {
    for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
      for (int lp = 0; lp < l; ++lp) {
        for (int sp = 0; sp < SupernetSpec::kNumScales; ++sp) {
          edges.push_back({NodeId{sp, lp}, NodeId{s, l}});
        }
      }
    }
  }
  return edges;
}

void ArchParams::validate() const {
  DCSS_CHECK(num_layers >= 1, "arch params: bad layer count");
  DCSS_CHECK(alpha.size() == static_cast<std::size_t>(4 * num_layers),
             "arch params: expected ", 4 * num_layers, " alpha entries, got ",
             alpha.size());
  DCSS_CHECK(beta.size() == alpha.size(), "arch params: expected ",
             alpha.size(), " beta entries, got ", beta.size());
  for (const auto& [id, a] : alpha) {
    DCSS_CHECK(id.layer >= 1 && id.layer <= num_layers &&
                   a.size() == kOperatorSpace.size(),
               "arch params: bad alpha entry at ", node_name(id));
    for (double v : a) DCSS_CHECK(std::isfinite(v), "arch params: non-finite alpha");
  }
  for (const auto& [id, b] : beta) {
    DCSS_CHECK(b.size() == static_cast<std::size_t>(in_degree(id.layer)),
               "arch params: beta at ", node_name(id), " has ", b.size(),
               " entries, expected ", in_degree(id.layer));
    for (double v : b) DCSS_CHECK(std::isfinite(v), "arch params: non-finite beta");
  }
}

double anneal_tau(const SamplerConfig& cfg, int epoch, int total_epochs) {
  DCSS_CHECK(cfg.tau_end > 0.0, "sampler: tau_end must stay non-zero");
  DCSS_CHECK(cfg.tau_start >= cfg.tau_end, "sampler: tau_start < tau_end");
  DCSS_CHECK(epoch >= 0, "sampler: negative epoch");
  if (total_epochs <= 1) return cfg.tau_start;
  const double t = std::min(1.0, static_cast<double>(epoch) /
                                     static_cast<double>(total_epochs - 1));
  return cfg.tau_start * std::pow(cfg.tau_end / cfg.tau_start, t);
}

std::vector<int> sample_paths(const std::vector<double>& beta, double tau,
                              int n_paths, Rng& rng) {
  DCSS_CHECK(!beta.empty(), "sample_paths: node has no incoming edges");
  DCSS_CHECK(tau > 0.0, "sample_paths: tau must be positive, got ", tau);
  DCSS_CHECK(n_paths >= 1, "sample_paths: n_paths must be >= 1");
  const int deg = static_cast<int>(beta.size());
  const int n = std::min(n_paths, deg);

  std::vector<int> remaining(static_cast<std::size_t>(deg));
  for (int i = 0; i < deg; ++i) remaining[static_cast<std::size_t>(i)] = i;
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(n));
  std::vector<double> probs;
  for (int round = 0; round < n; ++round) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int e : remaining) {
      mx = std::max(mx, beta[static_cast<std::size_t>(e)] / tau);
    }
    probs.resize(remaining.size());
    double total = 0.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      probs[i] = std::exp(beta[static_cast<std::size_t>(remaining[i])] / tau - mx);
      total += probs[i];
    }
    double u = rng.uniform() * total;
    std::size_t chosen = remaining.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    picked.push_back(remaining[chosen]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

// --- layers -----------------------------------------------------------------

void Conv2dLayer::init(index_t c_out, index_t c_in, int k, int stride_,
                       int groups_, Rng& rng, bool zero) {
  stride = stride_;
  padding = (k - 1) / 2;
  groups = groups_;
  weight = Tensor({c_out, c_in / groups_, k, k}, /*requires_grad=*/true);
  if (!zero) {
    const double fan_in = static_cast<double>(c_in / groups_) * k * k;
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (auto& w : weight.data()) w = rng.normal() * std_dev;
  }
}

Tensor Conv2dLayer::forward(Tape* tape, const Tensor& x) const {
  return ops::conv2d(tape, x, weight, stride, padding, groups);
}

void Conv2dLayer::collect(const std::string& prefix, NamedTensorList* weights,
                          NamedTensorList* /*state*/) {
  weights->push_back({prefix + "w", weight, /*weight_decay=*/true});
}

void BatchNormLayer::init(index_t channels, double gamma_init) {
  gamma = Tensor::full({channels}, gamma_init, /*requires_grad=*/true);
  beta = Tensor({channels}, /*requires_grad=*/true);
  running_mean = Tensor({channels});
  running_var = Tensor::full({channels}, 1.0);
}

Tensor BatchNormLayer::forward(Tape* tape, const Tensor& x,
                               bool training) const {
  return ops::batch_norm(tape, x, gamma, beta, running_mean, running_var,
                         training);
}

void BatchNormLayer::collect(const std::string& prefix,
                             NamedTensorList* weights, NamedTensorList* state) {
  weights->push_back({prefix + "gamma", gamma, false});
  weights->push_back({prefix + "beta", beta, false});
  if (state) {
    state->push_back({prefix + "running_mean", running_mean, false});
    state->push_back({prefix + "running_var", running_var, false});
  }
}

void ConvBn::init(index_t c_out, index_t c_in, int k, int stride, int groups,
                  Rng& rng, bool relu_after, double gamma_init) {
  conv.init(c_out, c_in, k, stride, groups, rng);
  bn.init(c_out, gamma_init);
  relu = relu_after;
}

Tensor ConvBn::forward(Tape* tape, const Tensor& x, bool training) const {
  Tensor y = bn.forward(tape, conv.forward(tape, x), training);
  return relu ? ops::relu(tape, y) : y;
}

void ConvBn::collect(const std::string& prefix, NamedTensorList* weights,
                     NamedTensorList* state) {
  conv.collect(prefix + "conv/", weights, state);
  bn.collect(prefix + "bn/", weights, state);
}

void MBConv::init(const OperatorConfig& cfg_in, index_t channels, Rng& rng) {
  cfg = cfg_in;
  const index_t expanded = channels * cfg.expansion;
  expand.init(expanded, channels, 1, 1, 1, rng, /*relu_after=*/true);
  depthwise.init(expanded, expanded, cfg.kernel, 1, static_cast<int>(expanded),
                 rng, /*relu_after=*/true);
  // Zero projection scale: a freshly built block is the identity, which keeps
  // the early search stable.
  project.init(channels, expanded, 1, 1, 1, rng, /*relu_after=*/false,
               /*gamma_init=*/0.0);
}

Tensor MBConv::forward(Tape* tape, const Tensor& x, bool training) const {
  Tensor y = expand.forward(tape, x, training);
  y = depthwise.forward(tape, y, training);
  y = project.forward(tape, y, training);
  return ops::add(tape, y, x);
}

void MBConv::collect(const std::string& prefix, NamedTensorList* weights,
                     NamedTensorList* state) {
  expand.collect(prefix + "expand/", weights, state);
  depthwise.collect(prefix + "dw/", weights, state);
  project.collect(prefix + "project/", weights, state);
}

index_t MBConv::param_count() const {
  NamedTensorList w;
  const_cast<MBConv*>(this)->collect("", &w, nullptr);
  index_t n = 0;
  for (const auto& p : w) n += p.tensor.numel();
  return n;
}

void AlignBranch::init(index_t src_width, index_t dst_width, int src_scale,
                       int dst_scale, Rng& rng) {
  up_factor = 1;
  downsample.clear();
  if (src_scale > dst_scale) {
    up_factor = 1 << (src_scale - dst_scale);
  } else if (src_scale < dst_scale) {
    downsample.resize(static_cast<std::size_t>(dst_scale - src_scale));
    for (auto& d : downsample) {
      d.init(src_width, src_width, 3, 2, 1, rng, /*relu_after=*/true);
    }
  }
  channel_proj.init(dst_width, src_width, 1, 1, 1, rng, /*relu_after=*/false);
}

Tensor AlignBranch::forward(Tape* tape, const Tensor& x, bool training) const {
  Tensor y = x;
  if (up_factor > 1) {
    // Width first: the 1x1 runs at the coarse resolution.
    y = channel_proj.forward(tape, y, training);
    return ops::bilinear_upsample(tape, y, up_factor);
  }
  for (const auto& d : downsample) y = d.forward(tape, y, training);
  return channel_proj.forward(tape, y, training);
}

void AlignBranch::collect(const std::string& prefix, NamedTensorList* weights,
                          NamedTensorList* state) {
  for (std::size_t i = 0; i < downsample.size(); ++i) {
    downsample[i].collect(cat(prefix, "down", i, "/"), weights, state);
  }
  channel_proj.collect(prefix + "proj/", weights, state);
}

void MixtureLayer::init(index_t channels, double channel_ratio, Rng& rng) {
  alpha = Tensor({static_cast<index_t>(kOperatorSpace.size())},
                 /*requires_grad=*/true);  // zeros: uniform operator weights
  index_t keep = static_cast<index_t>(std::llround(channel_ratio *
                                                   static_cast<double>(channels)));
  keep = std::clamp<index_t>(keep, 1, channels);
  std::vector<index_t> perm(static_cast<std::size_t>(channels));
  for (index_t i = 0; i < channels; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  mask.assign(perm.begin(), perm.begin() + keep);
  std::sort(mask.begin(), mask.end());
  for (std::size_t o = 0; o < kOperatorSpace.size(); ++o) {
    ops[o].init(kOperatorSpace[o], keep, rng);
  }
}

Tensor MixtureLayer::forward(Tape* tape, const Tensor& input,
                             bool training) const {
  DCSS_CHECK(input.rank() == 4, "mixture: expected NCHW input");
  Tensor w = ops::softmax(tape, alpha, 0);
  Tensor sub = ops::channel_gather(tape, input, mask);
  Tensor acc;
  for (std::size_t o = 0; o < ops.size(); ++o) {
    Tensor term = ops::scalar_mul(
        tape, ops[o].forward(tape, sub, training),
        ops::select(tape, w, static_cast<index_t>(o)));
    acc = acc.defined() ? ops::add(tape, acc, term) : term;
  }
  return ops::channel_scatter_merge(tape, acc, input, mask);
}

void MixtureLayer::collect(const std::string& prefix, NamedTensorList* weights,
                           NamedTensorList* state) {
  for (std::size_t o = 0; o < ops.size(); ++o) {
    ops[o].collect(prefix + op_name(kOperatorSpace[o]) + "/", weights, state);
  }
}

void Stem::init(const SupernetSpec& spec, Rng& rng) {
  conv7.init(32, 3, 7, 2, 1, rng, /*relu_after=*/true);
  for (int i = 0; i < 4; ++i) {
    const index_t c_in = i == 0 ? 32 : spec.width(i - 1);
    down[static_cast<std::size_t>(i)].init(spec.width(i), c_in, 3, 2, 1, rng,
                                           /*relu_after=*/true);
  }
}

std::array<Tensor, 4> Stem::forward(Tape* tape, const Tensor& images,
                                    bool training) const {
  std::array<Tensor, 4> pyramid;
  Tensor x = conv7.forward(tape, images, training);
  for (std::size_t i = 0; i < down.size(); ++i) {
    x = down[i].forward(tape, x, training);
    pyramid[i] = x;
  }
  return pyramid;
}

void Stem::collect(const std::string& prefix, NamedTensorList* weights,
                   NamedTensorList* state) {
  conv7.collect(prefix + "conv7/", weights, state);
  for (std::size_t i = 0; i < down.size(); ++i) {
    down[i].collect(cat(prefix, "down", i, "/"), weights, state);
  }
}

void Head::init(const SupernetSpec& spec, Rng& rng) {
  const index_t cat_width = spec.width(0) + spec.width(1) + spec.width(2) +
                            spec.width(3);  // 15F
  fuse.init(2 * spec.base_width, cat_width, 3, 1, 1, rng, /*relu_after=*/true);
  classifier.init(spec.num_classes, 2 * spec.base_width, 1, 1, 1, rng);
}

Tensor Head::forward(Tape* tape, const std::array<Tensor, 4>& finals,
                     bool training) const {
  std::vector<Tensor> aligned;
  aligned.reserve(4);
  for (int i = 0; i < 4; ++i) {
    const auto& f = finals[static_cast<std::size_t>(i)];
    aligned.push_back(i == 0 ? f : ops::bilinear_upsample(tape, f, 1 << i));
  }
  Tensor fused = fuse.forward(tape, ops::concat(tape, aligned, 1), training);
  Tensor logits = classifier.forward(tape, fused);
  return ops::bilinear_upsample(tape, logits, 4);
}

void Head::collect(const std::string& prefix, NamedTensorList* weights,
                   NamedTensorList* state) {
  fuse.collect(prefix + "fuse/", weights, state);
  classifier.collect(prefix + "classifier/", weights, state);
}

// --- supernet ---------------------------------------------------------------

Supernet::Supernet(const SupernetSpec& spec, std::uint64_t seed)
    : spec_(spec), seed_(seed) {
  spec_.validate();
  {
    Rng rng(hash_seed({seed_, kTagStem}));
    stem_.init(spec_, rng);
  }
  {
    Rng rng(hash_seed({seed_, kTagHead}));
    head_.init(spec_, rng);
  }
  nodes_.resize(static_cast<std::size_t>(spec_.num_layers));
  for (int l = 1; l <= spec_.num_layers; ++l) {
    for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
      Node& nd = nodes_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(s)];
      nd.id = NodeId{s, l};
      Rng mix_rng(hash_seed({seed_, kTagMixture, static_cast<std::uint64_t>(l),
                             static_cast<std::uint64_t>(s)}));
      nd.mixture.init(spec_.width(s), spec_.channel_ratio, mix_rng);
      nd.beta = Tensor({static_cast<index_t>(in_degree(l))},
                       /*requires_grad=*/true);
      Rng beta_rng(hash_seed({seed_, kTagBeta, static_cast<std::uint64_t>(l),
                              static_cast<std::uint64_t>(s)}));
      for (auto& b : nd.beta.data()) b = beta_rng.normal() * 0.01;
    }
  }
}

Supernet::Node& Supernet::node(const NodeId& id) {
  DCSS_CHECK(id.layer >= 1 && id.layer <= spec_.num_layers && id.scale >= 0 &&
                 id.scale < 4,
             "supernet: no node ", node_name(id));
  return nodes_[static_cast<std::size_t>(id.layer - 1)]
               [static_cast<std::size_t>(id.scale)];
}

const Supernet::Node& Supernet::node(const NodeId& id) const {
  return const_cast<Supernet*>(this)->node(id);
}

AlignBranch& Supernet::branch(const NodeId& dst, int edge) {
  Node& nd = node(dst);
  DCSS_CHECK(edge >= 0 && edge < in_degree(dst.layer), "supernet: edge ", edge,
             " out of range for ", node_name(dst));
  auto it = nd.branches.find(edge);
  if (it == nd.branches.end()) {
    const NodeId src = edge_source(edge);
    Rng rng(hash_seed({seed_, kTagBranch, static_cast<std::uint64_t>(dst.layer),
                       static_cast<std::uint64_t>(dst.scale),
                       static_cast<std::uint64_t>(edge)}));
    AlignBranch br;
    br.init(spec_.width(src.scale), spec_.width(dst.scale), src.scale,
            dst.scale, rng);
    it = nd.branches.emplace(edge, std::move(br)).first;
    params_dirty_ = true;
  }
  return it->second;
}

bool Supernet::has_branch(const NodeId& dst, int edge) const {
  return node(dst).branches.count(edge) > 0;
}

MixtureLayer& Supernet::mixture(const NodeId& id) { return node(id).mixture; }

Tensor Supernet::aggregate_inputs(
    Tape* tape, Node& nd, const std::vector<std::array<Tensor, 4>>& outputs,
    const std::vector<int>& selected, bool training) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(in_degree(nd.id.layer)), 0);
  for (int e : selected) mask[static_cast<std::size_t>(e)] = 1;
  Tensor blend = ops::masked_softmax(tape, nd.beta, mask);

  Tensor acc;
  for (int e : selected) {
    const NodeId src = edge_source(e);
    AlignBranch& br = branch(nd.id, e);
    const Tensor& raw = outputs[static_cast<std::size_t>(src.layer)]
                               [static_cast<std::size_t>(src.scale)];
    Tensor aligned = br.forward(tape, raw, training);
    DCSS_CHECK(aligned.dim(1) == spec_.width(nd.id.scale),
               "fusion: alignment bug on edge ", node_name(src), "->",
               node_name(nd.id), ": got ", shape_str(aligned.shape()));
    Tensor term = ops::scalar_mul(tape, aligned,
                                  ops::select(tape, blend, e));
    acc = acc.defined() ? ops::add(tape, acc, term) : term;
  }
  return acc;
}

Tensor Supernet::forward(Tape* tape, const Tensor& images, ForwardMode mode,
                         bool training, double tau, Rng* path_rng) {
  DCSS_CHECK(images.rank() == 4 && images.dim(1) == 3,
             "supernet: images must be [N,3,H,W], got ",
             shape_str(images.shape()));
  DCSS_CHECK(images.dim(2) % 32 == 0 && images.dim(3) % 32 == 0,
             "supernet: image size ", images.dim(2), "x", images.dim(3),
             " not divisible by 32");
  if (mode == ForwardMode::kSampled) {
    DCSS_CHECK(path_rng != nullptr, "supernet: sampled mode needs a path rng");
  }

  std::vector<std::array<Tensor, 4>> outputs(
      static_cast<std::size_t>(spec_.num_layers + 1));
  outputs[0] = stem_.forward(tape, images, training);

  std::vector<int> all_edges;
  for (int l = 1; l <= spec_.num_layers; ++l) {
    const int deg = in_degree(l);
    if (mode == ForwardMode::kFull) {
      all_edges.resize(static_cast<std::size_t>(deg));
      for (int e = 0; e < deg; ++e) all_edges[static_cast<std::size_t>(e)] = e;
    }
    for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
      Node& nd = node(NodeId{s, l});
      std::vector<int> selected =
          mode == ForwardMode::kFull
              ? all_edges
              : sample_paths(nd.beta.data(), tau, spec_.n_paths, *path_rng);
      Tensor input = aggregate_inputs(tape, nd, outputs, selected, training);
      outputs[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)] =
          nd.mixture.forward(tape, input, training);
    }
  }
  return head_.forward(tape, outputs[static_cast<std::size_t>(spec_.num_layers)],
                       training);
}

Tensor Supernet::alpha(const NodeId& id) { return node(id).mixture.alpha; }
Tensor Supernet::beta(const NodeId& id) { return node(id).beta; }

std::vector<Tensor> Supernet::all_alphas() {
  std::vector<Tensor> out;
  for (auto& layer : nodes_) {
    for (auto& nd : layer) out.push_back(nd.mixture.alpha);
  }
  return out;
}

std::vector<Tensor> Supernet::all_betas() {
  std::vector<Tensor> out;
  for (auto& layer : nodes_) {
    for (auto& nd : layer) out.push_back(nd.beta);
  }
  return out;
}

ArchParams Supernet::arch_params() const {
  ArchParams p;
  p.num_layers = spec_.num_layers;
  for (const auto& layer : nodes_) {
    for (const auto& nd : layer) {
      p.alpha[nd.id] = nd.mixture.alpha.data();
      p.beta[nd.id] = nd.beta.data();
    }
  }
  return p;
}

void Supernet::set_arch_params(const ArchParams& params) {
  DCSS_CHECK(params.num_layers == spec_.num_layers,
             "supernet: arch params are for L=", params.num_layers,
             ", net has L=", spec_.num_layers);
  for (auto& layer : nodes_) {
    for (auto& nd : layer) {
      nd.mixture.alpha.data() = params.alpha.at(nd.id);
      nd.beta.data() = params.beta.at(nd.id);
    }
  }
}

void Supernet::refresh_param_cache() {
  if (!params_dirty_) return;
  cached_weights_.clear();
  cached_state_.clear();
  cached_arch_.clear();
  stem_.collect("stem/", &cached_weights_, &cached_state_);
  for (auto& layer : nodes_) {
    for (auto& nd : layer) {
      const std::string prefix = "node/" + node_name(nd.id) + "/";
      nd.mixture.collect(prefix, &cached_weights_, &cached_state_);
      for (auto& [e, br] : nd.branches) {
        br.collect(cat(prefix, "branch", e, "/"), &cached_weights_,
                   &cached_state_);
      }
      const std::string arch_prefix = "arch/" + node_name(nd.id) + "/";
      cached_arch_.push_back({arch_prefix + "alpha", nd.mixture.alpha, false});
      cached_arch_.push_back({arch_prefix + "beta", nd.beta, false});
    }
  }
  head_.collect("head/", &cached_weights_, &cached_state_);
  params_dirty_ = false;
}

const NamedTensorList& Supernet::weight_params() {
  refresh_param_cache();
  return cached_weights_;
}

const NamedTensorList& Supernet::arch_param_tensors() {
  refresh_param_cache();
  return cached_arch_;
}

const NamedTensorList& Supernet::state_tensors() {
  refresh_param_cache();
  return cached_state_;
}

index_t Supernet::param_count() {
  index_t n = 0;
  for (const auto& p : weight_params()) n += p.tensor.numel();
  for (const auto& p : arch_param_tensors()) n += p.tensor.numel();
  return n;
}

void Supernet::save(const std::string& path, const nlohmann::json& extra_index,
                    const NamedTensorList& extra_tensors) {
  nlohmann::json index = {
      {"format", "dcss-ckpt-v1"},
      {"kind", "supernet"},
      {"seed", seed_},
      {"spec", spec_.to_json()},
      {"scales", {0.25, 0.125, 0.0625, 0.03125}},
      {"operator_order", nlohmann::json::array()},
  };
  for (const auto& cfg : kOperatorSpace) {
    index["operator_order"].push_back(op_name(cfg));
  }
  for (auto it = extra_index.begin(); it != extra_index.end(); ++it) {
    index[it.key()] = it.value();
  }
  NamedTensorList tensors = weight_params();
  for (auto& t : arch_param_tensors()) tensors.push_back(t);
  for (auto& t : state_tensors()) tensors.push_back(t);
  for (const auto& t : extra_tensors) tensors.push_back(t);
  write_checkpoint(path, index, tensors);
}

Supernet Supernet::load(const std::string& path, nlohmann::json* index_out,
                        std::map<std::string, Tensor>* all_tensors) {
  Checkpoint ckpt = read_checkpoint(path);
  DCSS_CHECK(ckpt.index.value("kind", "") == "supernet",
             "checkpoint '", path, "' is not a supernet checkpoint");
  SupernetSpec spec = SupernetSpec::from_json(ckpt.index.at("spec"));
  Supernet net(spec, ckpt.index.at("seed").get<std::uint64_t>());

  // Instantiate every branch the checkpoint mentions, then copy by name.
  for (const auto& name : ckpt.order) {
    if (name.rfind("node/", 0) != 0) continue;
    const auto bpos = name.find("/branch");
    if (bpos == std::string::npos) continue;
    const NodeId id = node_from_name(name.substr(5, bpos - 5));
    const int e = std::atoi(name.c_str() + bpos + 7);
    net.branch(id, e);
  }
  std::map<std::string, Tensor> own;
  for (auto& t : net.weight_params()) own.emplace(t.name, t.tensor);
  for (auto& t : net.arch_param_tensors()) own.emplace(t.name, t.tensor);
  for (auto& t : net.state_tensors()) own.emplace(t.name, t.tensor);
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto it = own.find(name);
    if (it != own.end()) it->second.copy_values_from(tensor);
  }
  if (index_out) *index_out = ckpt.index;
  if (all_tensors) *all_tensors = std::move(ckpt.tensors);
  return net;
}

ArchParams arch_params_from_checkpoint(const Checkpoint& ckpt,
                                       SupernetSpec* spec_out) {
  SupernetSpec spec = SupernetSpec::from_json(ckpt.index.at("spec"));
  if (spec_out) *spec_out = spec;
  ArchParams p;
  p.num_layers = spec.num_layers;
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.rfind("arch/", 0) != 0) continue;
    const auto slash = name.find('/', 5);
    DCSS_CHECK(slash != std::string::npos, "bad arch tensor name '", name, "'");
    const NodeId id = node_from_name(name.substr(5, slash - 5));
    const std::string what = name.substr(slash + 1);
    if (what == "alpha") {
      p.alpha[id] = tensor.data();
    } else if (what == "beta") {
      p.beta[id] = tensor.data();
    }
  }
  p.validate();
  return p;
}

}  // namespace dcss
