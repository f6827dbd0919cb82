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
#include "dcss/decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

#include "dcss/metrics.hpp"

namespace dcss {

namespace {
constexpr std::uint64_t kTagStandalone = 0x20;
constexpr std::uint64_t kTagTrainShuffle = 0x21;
constexpr std::uint64_t kTagTrainAug = 0x22;

std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::set<NodeId> DecodedArchitecture::retained_nodes() const {
  std::set<NodeId> nodes;
  for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
    nodes.insert(NodeId{s, spec.num_layers});
  }
  for (const auto& [src, dst] : kept_edges) {
    nodes.insert(dst);
    if (src.layer > 0) nodes.insert(src);
  }
  return nodes;
}

std::map<NodeId, int> DecodedArchitecture::in_degrees() const {
  std::map<NodeId, int> deg;
  for (const NodeId& id : retained_nodes()) deg[id] = 0;
  for (const auto& [src, dst] : kept_edges) ++deg[dst];
  return deg;
}

ArchParams DecodedArchitecture::implied_arch_params() const {
  ArchParams p;
  p.num_layers = spec.num_layers;
  double min_kept = 0.0;
  for (const auto& [edge, b] : edge_beta) min_kept = std::min(min_kept, b);
  const double dropped = std::min(-50.0, min_kept - 1.0);
  for (int l = 1; l <= spec.num_layers; ++l) {
    for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
      const NodeId id{s, l};
      std::vector<double> a(kOperatorSpace.size(), 0.0);
      auto it = chosen_op.find(id);
      if (it != chosen_op.end()) a[static_cast<std::size_t>(op_index(it->second))] = 1.0;
      p.alpha[id] = std::move(a);
      p.beta[id] = std::vector<double>(static_cast<std::size_t>(in_degree(l)),
                                       dropped);
    }
  }
  for (const auto& [edge, b] : edge_beta) {
    p.beta[edge.second][static_cast<std::size_t>(edge_index(edge.first))] = b;
  }
  return p;
}

void DecodedArchitecture::validate() const {
  spec.validate();
  const auto nodes = retained_nodes();
  for (const auto& [src, dst] : kept_edges) {
    DCSS_CHECK(src.layer < dst.layer, "decoded: edge ", node_name(src), "->",
               node_name(dst), " violates acyclicity");
    DCSS_CHECK(dst.layer >= 1 && dst.layer <= spec.num_layers,
               "decoded: edge into invalid node ", node_name(dst));
    DCSS_CHECK(edge_beta.count({src, dst}) == 1,
               "decoded: missing beta for edge ", node_name(src), "->",
               node_name(dst));
  }
  const auto degrees = in_degrees();
  for (const NodeId& id : nodes) {
    DCSS_CHECK(chosen_op.count(id) == 1, "decoded: node ", node_name(id),
               " has no chosen operator");
    DCSS_CHECK(degrees.at(id) >= 1, "decoded: retained node ", node_name(id),
               " has no kept incoming edge");
  }
}

nlohmann::json DecodedArchitecture::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  const std::set<NodeId> retained = retained_nodes();
  std::vector<NodeId> ordered(retained.begin(), retained.end());
  std::sort(ordered.begin(), ordered.end(), [](const NodeId& a, const NodeId& b) {
    return std::pair(a.layer, a.scale) < std::pair(b.layer, b.scale);
  });
  for (const NodeId& id : ordered) {
    nodes.push_back({{"id", node_name(id)}, {"op", op_name(chosen_op.at(id))}});
  }
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json betas = nlohmann::json::array();
  for (const auto& [src, dst] : kept_edges) {
    edges.push_back({node_name(src), node_name(dst)});
    betas.push_back(edge_beta.at({src, dst}));
  }
  return {{"nodes", nodes},
          {"edges", edges},
          {"edge_betas", betas},
          {"spec", spec.to_json()},
          {"provenance", provenance}};
}

DecodedArchitecture DecodedArchitecture::from_json(const nlohmann::json& j) {
  DecodedArchitecture arch;
  arch.spec = SupernetSpec::from_json(j.at("spec"));
  arch.provenance = j.value("provenance", "");
  for (const auto& n : j.at("nodes")) {
    arch.chosen_op[node_from_name(n.at("id").get<std::string>())] =
        op_from_name(n.at("op").get<std::string>());
  }
  const auto& edges = j.at("edges");
  const auto& betas = j.at("edge_betas");
  DCSS_CHECK(edges.size() == betas.size(),
             "decoded: edges and edge_betas disagree in length");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    Edge e{node_from_name(edges[i][0].get<std::string>()),
           node_from_name(edges[i][1].get<std::string>())};
    arch.kept_edges.insert(e);
    arch.edge_beta[e] = betas[i].get<double>();
  }
  arch.validate();
  return arch;
}

std::string DecodedArchitecture::to_dot() const {
  std::string out = "digraph decoded {\n  rankdir=LR;\n";
  for (const NodeId& id : retained_nodes()) {
    out += cat("  \"", node_name(id), "\" [label=\"", node_name(id), "\\n",
               op_name(chosen_op.at(id)), "\"];\n");
  }
  for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
    out += cat("  \"", node_name(NodeId{s, 0}), "\" [shape=box];\n");
  }
  for (const auto& [src, dst] : kept_edges) {
    out += cat("  \"", node_name(src), "\" -> \"", node_name(dst), "\";\n");
  }
  return out + "}\n";
}

std::map<NodeId, OperatorConfig> select_operators(const ArchParams& params,
                                                  std::vector<NodeId>* ties) {
  std::map<NodeId, OperatorConfig> chosen;
  for (const auto& [id, logits] : params.alpha) {
    int best = 0;
    bool tied = false;
    for (int o = 1; o < static_cast<int>(logits.size()); ++o) {
      if (logits[static_cast<std::size_t>(o)] >
          logits[static_cast<std::size_t>(best)]) {
        best = o;
        tied = false;
      } else if (logits[static_cast<std::size_t>(o)] ==
                 logits[static_cast<std::size_t>(best)]) {
        tied = true;
      }
    }
    if (tied && ties) ties->push_back(id);
    chosen[id] = kOperatorSpace[static_cast<std::size_t>(best)];
  }
  return chosen;
}

std::set<Edge> decode_connections(const ArchParams& params, bool strict) {
  params.validate();
  std::set<Edge> kept;
  std::deque<NodeId> worklist;
  std::set<NodeId> visited;
  for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
    worklist.push_back(NodeId{s, params.num_layers});
  }
  while (!worklist.empty()) {
    const NodeId dst = worklist.front();
    worklist.pop_front();
    if (!visited.insert(dst).second) continue;
    const auto& beta = params.beta.at(dst);
    bool any = false;
    for (int e = 0; e < static_cast<int>(beta.size()); ++e) {
      if (beta[static_cast<std::size_t>(e)] < 0.0) continue;
      any = true;
      const NodeId src = edge_source(e);
      kept.insert({src, dst});
      if (src.layer > 0) worklist.push_back(src);
    }
    if (!any && !strict) {
      // The printed algorithm can strand a node with no non-negative incoming
      // edge; keep its single strongest edge instead.
      int best = 0;
      for (int e = 1; e < static_cast<int>(beta.size()); ++e) {
        if (beta[static_cast<std::size_t>(e)] > beta[static_cast<std::size_t>(best)]) {
          best = e;
        }
      }
      const NodeId src = edge_source(best);
      kept.insert({src, dst});
      if (src.layer > 0) worklist.push_back(src);
    }
  }
  return kept;
}

DecodedArchitecture decode(const ArchParams& params, const SupernetSpec& spec,
                           bool strict, const std::string& provenance) {
  DCSS_CHECK(params.num_layers == spec.num_layers,
             "decode: params are for L=", params.num_layers, ", spec has L=",
             spec.num_layers);
  DecodedArchitecture arch;
  arch.spec = spec;
  arch.provenance = provenance;
  arch.kept_edges = decode_connections(params, strict);
  for (const auto& [src, dst] : arch.kept_edges) {
    arch.edge_beta[{src, dst}] =
        params.beta.at(dst)[static_cast<std::size_t>(edge_index(src))];
  }
  const auto all_ops = select_operators(params);
  for (const NodeId& id : arch.retained_nodes()) {
    arch.chosen_op[id] = all_ops.at(id);
  }
  if (!strict) arch.validate();
  return arch;
}

// --- stand-alone network ----------------------------------------------------

StandaloneNet::StandaloneNet(const DecodedArchitecture& arch,
                             std::uint64_t seed) {
  arch_ = arch;
  arch_.validate();
  build(seed);
}

void StandaloneNet::build(std::uint64_t seed) {
  seed_ = seed;
  const SupernetSpec& spec = arch_.spec;
  {
    Rng rng(hash_seed({seed_, kTagStandalone, 0x57e8}));
    stem_.init(spec, rng);
  }
  {
    Rng rng(hash_seed({seed_, kTagStandalone, 0x4ead}));
    head_.init(spec, rng);
  }
  for (const NodeId& id : arch_.retained_nodes()) {
    SNode node;
    Rng rng(hash_seed({seed_, kTagStandalone,
                       static_cast<std::uint64_t>(id.layer),
                       static_cast<std::uint64_t>(id.scale)}));
    node.op.init(arch_.chosen_op.at(id), spec.width(id.scale), rng);
    std::vector<double> betas;
    for (const auto& [src, dst] : arch_.kept_edges) {
      if (!(dst == id)) continue;
      const int e = edge_index(src);
      node.kept.push_back(e);
    }
    std::sort(node.kept.begin(), node.kept.end());
    for (int e : node.kept) {
      betas.push_back(arch_.edge_beta.at({edge_source(e), id}));
      Rng brng(hash_seed({seed_, kTagStandalone,
                          static_cast<std::uint64_t>(id.layer),
                          static_cast<std::uint64_t>(id.scale),
                          static_cast<std::uint64_t>(e)}));
      AlignBranch br;
      const NodeId src = edge_source(e);
      br.init(spec.width(src.scale), spec.width(id.scale), src.scale, id.scale,
              brng);
      node.branches.emplace(e, std::move(br));
    }
    // Fixed blend weights: softmax over the searched betas of the kept edges.
    double mx = *std::max_element(betas.begin(), betas.end());
    double denom = 0.0;
    node.blend.resize(betas.size());
    for (std::size_t i = 0; i < betas.size(); ++i) {
      node.blend[i] = std::exp(betas[i] - mx);
      denom += node.blend[i];
    }
    for (auto& b : node.blend) b /= denom;
    nodes_.emplace(id, std::move(node));
  }
}

namespace {

void copy_convbn(ConvBn& dst, const ConvBn& src) {
  dst.conv.weight.copy_values_from(src.conv.weight);
  dst.bn.gamma.copy_values_from(src.bn.gamma);
  dst.bn.beta.copy_values_from(src.bn.beta);
  dst.bn.running_mean.copy_values_from(src.bn.running_mean);
  dst.bn.running_var.copy_values_from(src.bn.running_var);
}

void copy_mbconv(MBConv& dst, const MBConv& src) {
  copy_convbn(dst.expand, src.expand);
  copy_convbn(dst.depthwise, src.depthwise);
  copy_convbn(dst.project, src.project);
}

void copy_align(AlignBranch& dst, const AlignBranch& src) {
  DCSS_CHECK(dst.downsample.size() == src.downsample.size() &&
                 dst.up_factor == src.up_factor,
             "inherit: alignment branch structure mismatch");
  for (std::size_t i = 0; i < dst.downsample.size(); ++i) {
    copy_convbn(dst.downsample[i], src.downsample[i]);
  }
  copy_convbn(dst.channel_proj, src.channel_proj);
}

void copy_stem(Stem& dst, const Stem& src) {
  copy_convbn(dst.conv7, src.conv7);
  for (std::size_t i = 0; i < dst.down.size(); ++i) {
    copy_convbn(dst.down[i], src.down[i]);
  }
}

void copy_head(Head& dst, const Head& src) {
  copy_convbn(dst.fuse, src.fuse);
  dst.classifier.weight.copy_values_from(src.classifier.weight);
}

}  // namespace

StandaloneNet StandaloneNet::inherit(const DecodedArchitecture& arch,
                                     Supernet& super) {
  DCSS_CHECK(arch.spec.channel_ratio == 1.0,
             "inherit: requires channel_ratio == 1 (mixture operators must be "
             "full width)");
  StandaloneNet net(arch, super.seed());
  copy_stem(net.stem_, super.stem());
  copy_head(net.head_, super.head());
  for (auto& [id, node] : net.nodes_) {
    MixtureLayer& mix = super.mixture(id);
    copy_mbconv(node.op, mix.ops[static_cast<std::size_t>(
                             op_index(arch.chosen_op.at(id)))]);
    for (auto& [e, br] : node.branches) {
      copy_align(br, super.branch(id, e));
    }
  }
  return net;
}

Tensor StandaloneNet::forward(Tape* tape, const Tensor& images, bool training) {
  const SupernetSpec& spec = arch_.spec;
  DCSS_CHECK(images.rank() == 4 && images.dim(1) == 3,
             "standalone: images must be [N,3,H,W]");
  DCSS_CHECK(images.dim(2) % 32 == 0 && images.dim(3) % 32 == 0,
             "standalone: image size not divisible by 32");
  std::vector<std::array<Tensor, 4>> outputs(
      static_cast<std::size_t>(spec.num_layers + 1));
  outputs[0] = stem_.forward(tape, images, training);
  for (int l = 1; l <= spec.num_layers; ++l) {
    for (int s = 0; s < SupernetSpec::kNumScales; ++s) {
      auto it = nodes_.find(NodeId{s, l});
      if (it == nodes_.end()) continue;
      SNode& node = it->second;
      Tensor acc;
      for (std::size_t i = 0; i < node.kept.size(); ++i) {
        const int e = node.kept[i];
        const NodeId src = edge_source(e);
        const Tensor& raw = outputs[static_cast<std::size_t>(src.layer)]
                                   [static_cast<std::size_t>(src.scale)];
        DCSS_CHECK(raw.defined(), "standalone: node ", node_name(src),
                   " used before it was computed");
        Tensor aligned = node.branches.at(e).forward(tape, raw, training);
        Tensor term = ops::affine(tape, aligned, node.blend[i], 0.0);
        acc = acc.defined() ? ops::add(tape, acc, term) : term;
      }
      Tensor mixed = node.op.forward(tape, acc, training);
      outputs[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)] = mixed;
    }
  }
  return head_.forward(tape,
                       outputs[static_cast<std::size_t>(spec.num_layers)],
                       training);
}

NamedTensorList StandaloneNet::weight_params() {
  NamedTensorList weights;
  stem_.collect("stem/", &weights, nullptr);
  for (auto& [id, node] : nodes_) {
    const std::string prefix = "node/" + node_name(id) + "/";
    node.op.collect(prefix + "op/", &weights, nullptr);
    for (auto& [e, br] : node.branches) {
      br.collect(cat(prefix, "branch", e, "/"), &weights, nullptr);
    }
  }
  head_.collect("head/", &weights, nullptr);
  return weights;
}

NamedTensorList StandaloneNet::state_tensors() {
  NamedTensorList weights, state;
  stem_.collect("stem/", &weights, &state);
  for (auto& [id, node] : nodes_) {
    const std::string prefix = "node/" + node_name(id) + "/";
    node.op.collect(prefix + "op/", &weights, &state);
    for (auto& [e, br] : node.branches) {
      br.collect(cat(prefix, "branch", e, "/"), &weights, &state);
    }
  }
  head_.collect("head/", &weights, &state);
  return state;
}

index_t StandaloneNet::param_count() {
  index_t n = 0;
  for (const auto& p : weight_params()) n += p.tensor.numel();
  return n;
}

void StandaloneNet::save(const std::string& path,
                         const nlohmann::json& extra_index) {
  nlohmann::json index = {{"format", "dcss-ckpt-v1"},
                          {"kind", "standalone"},
                          {"seed", seed_},
                          {"arch", arch_.to_json()}};
  for (auto it = extra_index.begin(); it != extra_index.end(); ++it) {
    index[it.key()] = it.value();
  }
  NamedTensorList tensors = weight_params();
  for (auto& t : state_tensors()) tensors.push_back(t);
  write_checkpoint(path, index, tensors);
}

StandaloneNet StandaloneNet::load(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  DCSS_CHECK(ckpt.index.value("kind", "") == "standalone",
             "checkpoint '", path, "' is not a stand-alone checkpoint");
  DecodedArchitecture arch =
      DecodedArchitecture::from_json(ckpt.index.at("arch"));
  StandaloneNet net(arch, ckpt.index.at("seed").get<std::uint64_t>());
  std::map<std::string, Tensor> own;
  for (auto& t : net.weight_params()) own.emplace(t.name, t.tensor);
  for (auto& t : net.state_tensors()) own.emplace(t.name, t.tensor);
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto it = own.find(name);
    if (it != own.end()) it->second.copy_values_from(tensor);
  }
  return net;
}

// --- stand-alone training ----------------------------------------------------

void TrainConfig::validate() const {
  DCSS_CHECK(epochs >= 0, "train: epochs must be >= 0");
  DCSS_CHECK(batch_size >= 1, "train: batch_size must be >= 1");
  DCSS_CHECK(lr > 0.0, "train: lr must be > 0");
  DCSS_CHECK(momentum >= 0.0 && momentum < 1.0, "train: momentum in [0,1)");
  DCSS_CHECK(weight_decay >= 0.0, "train: weight_decay must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size},
          {"lr", lr},           {"momentum", momentum},
          {"weight_decay", weight_decay}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

TrainResult train_standalone(StandaloneNet& net, const Dataset& dataset,
                             const TrainConfig& cfg,
                             const std::string& out_dir) {
  cfg.validate();
  DCSS_CHECK(!dataset.val.empty(), "train: empty validation split");
  std::vector<SegSample> train;
  train.reserve(dataset.train_a.size() + dataset.train_b.size());
  for (const auto& s : dataset.train_a) train.push_back(s);
  for (const auto& s : dataset.train_b) train.push_back(s);
  DCSS_CHECK(!train.empty(), "train: empty training split");

  SgdOptimizer opt(SgdConfig{cfg.momentum, cfg.weight_decay});
  const index_t steps_per_epoch =
      (static_cast<index_t>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const LrSchedule schedule{cfg.lr,
                            std::max<index_t>(1, steps_per_epoch * cfg.epochs),
                            0.9};
  const AugmentConfig aug{0.5, 2.0, dataset.spec.height, dataset.spec.width,
                          0.5};

  auto eval_net = [&]() {
    return evaluate_miou(
        [&](const Tensor& images) {
          return net.forward(nullptr, images, /*training=*/false);
        },
        dataset.val, cfg.batch_size, dataset.spec.num_classes);
  };

  std::ofstream csv;
  if (!out_dir.empty()) {
    csv.open(out_dir + "/train_metrics.csv", std::ios::trunc);
    if (!csv.good()) {
      throw IoError(cat("train: cannot write metrics under '", out_dir, "'"));
    }
    csv << "epoch,train_ce,val_miou\n";
  }

  TrainResult result;
  std::vector<Tensor> best_snapshot;
  auto snapshot = [&]() {
    best_snapshot.clear();
    for (auto& p : net.weight_params()) {
      best_snapshot.push_back(p.tensor.detached_copy());
    }
    for (auto& p : net.state_tensors()) {
      best_snapshot.push_back(p.tensor.detached_copy());
    }
  };
  auto restore = [&]() {
    if (best_snapshot.empty()) return;
    std::size_t i = 0;
    for (auto& p : net.weight_params()) {
      p.tensor.copy_values_from(best_snapshot[i++]);
    }
    for (auto& p : net.state_tensors()) {
      p.tensor.copy_values_from(best_snapshot[i++]);
    }
  };

  if (cfg.epochs == 0) {
    result.best_val_miou = eval_net();
    result.best_epoch = -1;
  }

  index_t iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<index_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<index_t>(i);
    Rng shuffle_rng(hash_seed({cfg.seed, kTagTrainShuffle,
                               static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double ce_sum = 0.0;
    for (index_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<SegSample> batch_samples;
      for (index_t i = step * cfg.batch_size;
           i < std::min<index_t>(static_cast<index_t>(order.size()),
                                 (step + 1) * cfg.batch_size);
           ++i) {
        const index_t id = order[static_cast<std::size_t>(i)];
        Rng aug_rng(hash_seed({cfg.seed, kTagTrainAug,
                               static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(id)}));
        batch_samples.push_back(
            augment(train[static_cast<std::size_t>(id)], aug, aug_rng));
      }
      std::vector<index_t> ids(batch_samples.size());
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<index_t>(i);
      Batch batch = stack_samples(batch_samples, ids);

      Tape tape;
      Tensor logits = net.forward(&tape, batch.images, /*training=*/true);
      Tensor ce = ops::cross_entropy(&tape, logits, batch.labels, kIgnoreIndex);
      const double ce_v = ce.item();
      if (!std::isfinite(ce_v)) {
        throw NumericError(cat("train: non-finite loss at iteration ", iter));
      }
      ce_sum += ce_v;
      tape.backward(ce);
      opt.step(net.weight_params(), poly_lr(iter, schedule));
      for (auto& p : net.weight_params()) {
        p.tensor.zero_grad();
      }
      ++iter;
    }

    TrainEpoch te;
    te.epoch = epoch;
    te.train_ce = ce_sum / static_cast<double>(steps_per_epoch);
    te.val_miou = eval_net();
    result.history.push_back(te);
    if (csv.is_open()) {
      csv << te.epoch << "," << fmt_g17(te.train_ce) << ","
          << fmt_g17(te.val_miou) << "\n";
    }
    if (te.val_miou > result.best_val_miou || result.best_epoch < 0) {
      result.best_val_miou = te.val_miou;
      result.best_epoch = epoch;
      snapshot();
    }
  }

  restore();
  if (!out_dir.empty()) {
    net.save(out_dir + "/weights.ckpt",
             {{"t_miou", result.best_val_miou},
              {"best_epoch", result.best_epoch},
              {"train_config", cfg.to_json()}});
    if (csv.is_open()) csv.flush();
  }
  return result;
}

}  // namespace dcss
