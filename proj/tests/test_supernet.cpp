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
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <doctest.h>

#include "dcss/supernet.hpp"
#include "test_util.hpp"

using namespace dcss;
using namespace dcss::testing;

TEST_CASE("search space: candidate connections number 8L(L+1)") {
  for (int L : {1, 2, 4, 14}) {
    const auto edges = list_candidate_edges(L);
    CHECK(static_cast<index_t>(edges.size()) == 8 * L * (L + 1));
    SupernetSpec spec;
    spec.num_layers = L;
    CHECK(spec.total_edges() == 8 * L * (L + 1));
  }
  CHECK(SupernetSpec{}.total_edges() == 1680);  // L = 14
}

TEST_CASE("search space: every edge is strictly forward in layers") {
  for (const auto& [src, dst] : list_candidate_edges(4)) {
    CHECK(src.layer < dst.layer);
    CHECK(edge_source(edge_index(src)) == src);
  }
}

TEST_CASE("stem: pyramid shapes, widths, and batch preservation") {
  SupernetSpec spec;
  spec.num_layers = 1;
  Supernet net(spec, 7);
  Rng rng(1);
  Tensor images = random_tensor({2, 3, 64, 64}, rng, 0.0, 1.0, false);
  Tape tape;
  std::array<Tensor, 4> pyramid = net.stem().forward(nullptr, images, false);
  const index_t sizes[4] = {16, 8, 4, 2};
  for (int s = 0; s < 4; ++s) {
    CHECK(pyramid[s].dim(0) == 2);
    CHECK(pyramid[s].dim(1) == spec.width(s));  // F, 2F, 4F, 8F
    CHECK(pyramid[s].dim(2) == sizes[s]);
    CHECK(pyramid[s].dim(3) == sizes[s]);
  }
  Tensor bad = random_tensor({1, 3, 48, 64}, rng, 0.0, 1.0, false);
  CHECK_THROWS_AS(net.forward(nullptr, bad, ForwardMode::kFull, false), Error);
}

TEST_CASE("mixture weights: softmax over the operator logits") {
  SUBCASE("uniform logits spread evenly over the 6 operators") {
    Tensor alpha({6});
    Tensor w = ops::softmax(nullptr, alpha, 0);
    for (double v : w.data()) CHECK(v == doctest::Approx(1.0 / 6).epsilon(1e-14));
  }
  SUBCASE("a ln 2 logit doubles its share") {
    Tensor alpha = Tensor::from({6}, {std::log(2.0), 0, 0, 0, 0, 0});
    Tensor w = ops::softmax(nullptr, alpha, 0);
    CHECK(w.data()[0] == doctest::Approx(2.0 / 7).epsilon(1e-14));
    for (int i = 1; i < 6; ++i) {
      CHECK(w.data()[i] == doctest::Approx(1.0 / 7).epsilon(1e-14));
    }
  }
  SUBCASE("random logits match a direct exp/sum evaluation") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor alpha = random_tensor({6}, rng, -3.0, 3.0, false);
      Tensor w = ops::softmax(nullptr, alpha, 0);
      double denom = 0.0;
      for (double v : alpha.data()) denom += std::exp(v);
      for (int i = 0; i < 6; ++i) {
        CHECK(w.data()[i] ==
              doctest::Approx(std::exp(alpha.data()[i]) / denom).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("mbconv: fresh block is the identity and zeroed projection stays so") {
  Rng rng(11);
  MBConv block;
  block.init(OperatorConfig{3, 3}, 8, rng);
  Tensor x = random_tensor({2, 8, 5, 5}, rng, -1.0, 1.0, false);
  // Projection BN scale starts at zero -> identity out of the box.
  Tensor y = block.forward(nullptr, x, false);
  CHECK(max_abs_diff(x, y) == 0.0);
  // Zeroing the projection conv (and restoring the scale) is also identity.
  std::fill(block.project.conv.weight.data().begin(),
            block.project.conv.weight.data().end(), 0.0);
  std::fill(block.project.bn.gamma.data().begin(),
            block.project.bn.gamma.data().end(), 1.0);
  Tensor z = block.forward(nullptr, x, false);
  CHECK(max_abs_diff(x, z) == 0.0);
  Tensor zt = block.forward(nullptr, x, true);
  CHECK(max_abs_diff(x, zt) == 0.0);
}

TEST_CASE("mbconv: parameter count matches the arithmetic oracle") {
  Rng rng(12);
  MBConv block;
  block.init(OperatorConfig{3, 3}, 8, rng);
  // (k=3, e=3, C=8): expand 8*24, depthwise 24*9, project 24*8, and
  // gamma+beta for each of the three norms.
  const index_t expanded = 8 * 3;
  const index_t want = 8 * expanded + expanded * 9 + expanded * 8 +
                       2 * (expanded + expanded + 8);
  CHECK(want == 712);
  CHECK(block.param_count() == want);
}

TEST_CASE("mbconv: shape preserving for every operator on odd and even sizes") {
  Rng rng(13);
  for (const auto& cfg : kOperatorSpace) {
    for (index_t hw : {4, 5}) {
      MBConv block;
      block.init(cfg, 6, rng);
      Tensor x = random_tensor({1, 6, hw, hw + 1}, rng, -1.0, 1.0, false);
      Tensor y = block.forward(nullptr, x, false);
      CHECK(y.shape() == x.shape());
    }
  }
}

TEST_CASE("mixture layer: full-ratio output equals the plain operator blend") {
  Rng rng(21);
  MixtureLayer mix;
  mix.init(8, 1.0, rng);
  for (auto& v : mix.alpha.data()) v = rng.uniform(-1.0, 1.0);
  Tensor x = random_tensor({1, 8, 6, 6}, rng, -1.0, 1.0, false);
  Tensor out = mix.forward(nullptr, x, false);

  double denom = 0.0;
  for (double a : mix.alpha.data()) denom += std::exp(a);
  Tensor want({1, 8, 6, 6});
  for (std::size_t o = 0; o < mix.ops.size(); ++o) {
    const double w = std::exp(mix.alpha.data()[o]) / denom;
    Tensor yo = mix.ops[o].forward(nullptr, x, false);
    for (std::size_t i = 0; i < want.data().size(); ++i) {
      want.data()[i] += w * yo.data()[i];
    }
  }
  CHECK(max_abs_diff(out, want) < 1e-8);
}

TEST_CASE("mixture layer: bypassed channels pass through bit-exactly") {
  Rng rng(22);
  MixtureLayer mix;
  mix.init(8, 0.25, rng);
  CHECK(mix.mask.size() == 2);  // round(0.25 * 8)
  Tensor x = random_tensor({2, 8, 5, 5}, rng, -1.0, 1.0, false);
  Tensor out = mix.forward(nullptr, x, true);
  std::vector<bool> masked(8, false);
  for (index_t c : mix.mask) masked[static_cast<std::size_t>(c)] = true;
  for (index_t n = 0; n < 2; ++n) {
    for (index_t c = 0; c < 8; ++c) {
      if (masked[static_cast<std::size_t>(c)]) continue;
      for (index_t p = 0; p < 25; ++p) {
        const double a = x.data()[x.offset4(n, c, p / 5, p % 5)];
        const double b = out.data()[out.offset4(n, c, p / 5, p % 5)];
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
      }
    }
  }
}

TEST_CASE("mixture layer: a dominant logit selects that operator's output") {
  Rng rng(23);
  MixtureLayer mix;
  mix.init(4, 1.0, rng);
  mix.alpha.data() = {0, 0, 0, 50.0, 0, 0};  // k5e6 dominates
  Tensor x = random_tensor({1, 4, 6, 6}, rng, -1.0, 1.0, false);
  Tensor out = mix.forward(nullptr, x, false);
  Tensor solo = mix.ops[3].forward(nullptr, x, false);
  CHECK(max_abs_diff(out, solo) < 1e-8);
}

TEST_CASE("transmission probabilities: softmax over all incoming edges") {
  SUBCASE("equal logits spread as 1/(4l)") {
    for (int l : {1, 2, 5}) {
      Tensor beta({static_cast<index_t>(in_degree(l))});
      Tensor p = ops::softmax(nullptr, beta, 0);
      for (double v : p.data()) {
        CHECK(v == doctest::Approx(1.0 / (4 * l)).epsilon(1e-14));
      }
    }
  }
  SUBCASE("a +50 edge absorbs effectively all probability") {
    Tensor beta({8});
    beta.data()[3] = 50.0;
    Tensor p = ops::softmax(nullptr, beta, 0);
    CHECK(p.data()[3] >= 1.0 - 1e-20);  // == 1.0 at f64 resolution
  }
  SUBCASE("random logits match the direct formula") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor beta = random_tensor({12}, rng, -2.0, 2.0, false);
      Tensor p = ops::softmax(nullptr, beta, 0);
      double denom = 0.0;
      for (double b : beta.data()) denom += std::exp(b);
      for (index_t i = 0; i < 12; ++i) {
        CHECK(p.data()[static_cast<std::size_t>(i)] ==
              doctest::Approx(std::exp(beta.data()[static_cast<std::size_t>(i)]) /
                              denom)
                  .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("sample_paths: degenerate and clamped cases") {
  Rng rng(41);
  std::vector<double> beta = {0.3, -1.0, 2.0, 0.7};
  SUBCASE("n equal to the in-degree selects everything") {
    auto sel = sample_paths(beta, 0.5, 4, rng);
    CHECK(sel == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("n beyond the in-degree clamps") {
    auto sel = sample_paths(beta, 0.5, 9, rng);
    CHECK(sel == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("selection is sorted and duplicate-free") {
    for (int trial = 0; trial < 50; ++trial) {
      auto sel = sample_paths(beta, 1.0, 2, rng);
      REQUIRE(sel.size() == 2);
      CHECK(sel[0] < sel[1]);
    }
  }
}

TEST_CASE("sample_paths: cold sampling locks onto the dominant edge") {
  Rng rng(42);
  std::vector<double> beta(8, 0.0);
  beta[5] = 10.0;
  int hits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto sel = sample_paths(beta, 0.01, 1, rng);
    hits += sel[0] == 5;
  }
  CHECK(hits >= 999);
}

TEST_CASE("sample_paths: hot sampling is uniform under a chi-square test") {
  Rng beta_rng(43);
  std::vector<double> beta(8);
  for (auto& b : beta) b = beta_rng.uniform(0.0, 1.0);  // spread <= 1
  Rng rng(44);
  std::vector<int> counts(8, 0);
  const int draws = 10000;
  for (int trial = 0; trial < draws; ++trial) {
    ++counts[static_cast<std::size_t>(sample_paths(beta, 100.0, 1, rng)[0])];
  }
  const double expected = draws / 8.0;
  double chi2 = 0.0;
  for (int c : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // dof = 7; chi2 below the 0.99 quantile (18.4753) means p > 0.01.
  CHECK(chi2 < 18.4753);
}

TEST_CASE("fusion blending: convexity and normalization") {
  Rng rng(51);
  SUBCASE("blend weights over a sampled subset sum to one") {
    for (int trial = 0; trial < 30; ++trial) {
      Tensor beta = random_tensor({12}, rng, -2.0, 2.0, false);
      const double tau = rng.uniform(0.05, 10.0);
      auto sel = sample_paths(beta.data(), tau, 3, rng);
      std::vector<std::uint8_t> mask(12, 0);
      for (int e : sel) mask[static_cast<std::size_t>(e)] = 1;
      Tensor w = ops::masked_softmax(nullptr, beta, mask);
      double total = 0.0;
      for (double v : w.data()) total += v;
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
  SUBCASE("equal inputs with half/half weights reproduce the input") {
    Tensor t = random_tensor({1, 4, 3, 3}, rng, -1.0, 1.0, false);
    Tensor half = Tensor::scalar(0.5);
    Tensor blended = ops::add(nullptr, ops::scalar_mul(nullptr, t, half),
                              ops::scalar_mul(nullptr, t, half));
    CHECK(max_abs_diff(blended, t) < 1e-15);
  }
}

TEST_CASE("head: output is class-shaped at input resolution") {
  SupernetSpec spec;
  spec.num_layers = 1;
  spec.num_classes = 7;
  Supernet net(spec, 3);
  Rng rng(6);
  Tensor images = random_tensor({2, 3, 64, 64}, rng, 0.0, 1.0, false);
  Rng paths(1);
  Tensor logits = net.forward(nullptr, images, ForwardMode::kSampled, false,
                              1.0, &paths);
  CHECK(logits.dim(0) == 2);
  CHECK(logits.dim(1) == 7);
  CHECK(logits.dim(2) == 64);
  CHECK(logits.dim(3) == 64);
}

TEST_CASE("head: permuting pyramid blocks with matching weights is a no-op") {
  // The fused 3x3 convolution treats the concatenated pyramid; permuting
  // the block order together with the corresponding input-channel slices of
  // the weight leaves the logits unchanged.
  Rng rng(61);
  const index_t widths[4] = {8, 16, 32, 64};
  std::vector<Tensor> blocks;
  for (int i = 0; i < 4; ++i) {
    blocks.push_back(random_tensor({1, widths[i], 8, 8}, rng, -1, 1, false));
  }
  Tensor w = random_tensor({16, 120, 3, 3}, rng, -1, 1, false);

  Tensor cat = ops::concat(nullptr, blocks, 1);
  Tensor out = ops::conv2d(nullptr, cat, w, 1, 1, 1);

  const int perm[4] = {2, 0, 3, 1};
  std::vector<Tensor> pblocks;
  for (int i = 0; i < 4; ++i) pblocks.push_back(blocks[perm[i]]);
  Tensor pcat = ops::concat(nullptr, pblocks, 1);
  Tensor pw({16, 120, 3, 3});
  index_t offsets[4] = {0, 8, 24, 56};  // channel offsets of each block
  index_t dst_c = 0;
  for (int i = 0; i < 4; ++i) {
    const index_t src0 = offsets[perm[i]];
    for (index_t c = 0; c < widths[perm[i]]; ++c, ++dst_c) {
      for (index_t co = 0; co < 16; ++co) {
        for (index_t t = 0; t < 9; ++t) {
          pw.data()[(co * 120 + dst_c) * 9 + t] =
              w.data()[(co * 120 + src0 + c) * 9 + t];
        }
      }
    }
  }
  Tensor pout = ops::conv2d(nullptr, pcat, pw, 1, 1, 1);
  CHECK(max_abs_diff(out, pout) < 1e-10);
}

TEST_CASE("supernet: L=1 nodes aggregate exactly the four stem inputs") {
  SupernetSpec spec;
  spec.num_layers = 1;
  CHECK(spec.total_edges() == 16);
  CHECK(in_degree(1) == 4);
  Supernet net(spec, 5);
  Rng rng(7);
  Tensor images = random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0, false);
  Tensor logits = net.forward(nullptr, images, ForwardMode::kFull, false);
  CHECK(logits.dim(1) == spec.num_classes);
  for (int s = 0; s < 4; ++s) {
    for (int e = 0; e < 4; ++e) CHECK(net.has_branch(NodeId{s, 1}, e));
  }
}

TEST_CASE("supernet: degenerate sampling equals the full forward") {
  SupernetSpec spec;
  spec.num_layers = 2;
  spec.channel_ratio = 1.0;  // r = 1
  spec.n_paths = in_degree(2);  // covers every in-degree in the graph
  Supernet net(spec, 11);
  Rng rng(8);
  Tensor images = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0, false);
  Tensor full = net.forward(nullptr, images, ForwardMode::kFull, false);
  Rng paths(99);
  Tensor sampled = net.forward(nullptr, images, ForwardMode::kSampled, false,
                               3.7, &paths);
  CHECK(max_abs_diff(full, sampled) < 1e-8);
}

TEST_CASE("supernet: alpha and beta gradients match finite differences") {
  SupernetSpec spec;
  spec.num_layers = 2;
  spec.base_width = 4;
  Supernet net(spec, 13);
  Rng rng(9);
  Tensor images = random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0, false);
  LabelMap labels(1, 32, 32);
  for (auto& v : labels.v) v = static_cast<std::int32_t>(rng.below(5));

  auto loss_value = [&](Tape* tape) {
    Tensor logits = net.forward(tape, images, ForwardMode::kFull, false);
    return ops::cross_entropy(tape, logits, labels);
  };

  for (auto& p : net.arch_param_tensors()) p.tensor.zero_grad();
  Tape tape;
  Tensor loss = loss_value(&tape);
  tape.backward(loss);

  Rng pick(10);
  const double h = 1e-4;
  int checked = 0;
  for (const auto& p : net.arch_param_tensors()) {
    if (pick.uniform() > 0.2) continue;  // a random handful of entries
    const index_t i = static_cast<index_t>(pick.below(
        static_cast<std::uint64_t>(p.tensor.numel())));
    const double orig = p.tensor.data()[static_cast<std::size_t>(i)];
    const double analytic = p.tensor.grad()[static_cast<std::size_t>(i)];
    p.tensor.data()[static_cast<std::size_t>(i)] = orig + h;
    const double up = loss_value(nullptr).item();
    p.tensor.data()[static_cast<std::size_t>(i)] = orig - h;
    const double down = loss_value(nullptr).item();
    p.tensor.data()[static_cast<std::size_t>(i)] = orig;
    const double fd = (up - down) / (2 * h);
    const double rel =
        std::abs(fd - analytic) / std::max(std::abs(fd) + std::abs(analytic), 1e-6);
    CHECK(rel < 1e-3);
    if (++checked >= 6) break;
  }
  CHECK(checked >= 3);
}

TEST_CASE("supernet: checkpoints round-trip byte for byte") {
  namespace fs = std::filesystem;
  SupernetSpec spec;
  spec.num_layers = 1;
  Supernet net(spec, 21);
  Rng rng(14);
  // Batch of 2: at 32x32 the coarsest scale is 1x1, and training-mode norms
  // need more than one statistic.
  Tensor images = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0, false);
  net.forward(nullptr, images, ForwardMode::kFull, true);  // touch stats

  const std::string p1 = (fs::temp_directory_path() / "dcss_sn1.ckpt").string();
  const std::string p2 = (fs::temp_directory_path() / "dcss_sn2.ckpt").string();
  net.save(p1);
  Supernet back = Supernet::load(p1);
  back.save(p2);
  CHECK(sha256_file(p1) == sha256_file(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("supernet: identical seeds build identical parameters lazily or not") {
  SupernetSpec spec;
  spec.num_layers = 2;
  Supernet a(spec, 33);
  Supernet b(spec, 33);
  // Different instantiation orders must not change branch weights.
  a.branch(NodeId{0, 2}, 1);
  a.branch(NodeId{1, 1}, 2);
  b.branch(NodeId{1, 1}, 2);
  b.branch(NodeId{0, 2}, 1);
  CHECK(max_abs_diff(a.branch(NodeId{0, 2}, 1).channel_proj.conv.weight,
                     b.branch(NodeId{0, 2}, 1).channel_proj.conv.weight) == 0.0);
  CHECK(max_abs_diff(a.branch(NodeId{1, 1}, 2).channel_proj.conv.weight,
                     b.branch(NodeId{1, 1}, 2).channel_proj.conv.weight) == 0.0);
}

TEST_CASE("tau annealing: strictly decreasing between the endpoints") {
  SamplerConfig cfg;
  const int epochs = 17;
  double prev = anneal_tau(cfg, 0, epochs);
  CHECK(prev == cfg.tau_start);
  for (int e = 1; e < epochs; ++e) {
    const double tau = anneal_tau(cfg, e, epochs);
    CHECK(tau < prev);
    CHECK(tau > 0.0);
    prev = tau;
  }
  CHECK(prev == doctest::Approx(cfg.tau_end).epsilon(1e-12));
}

TEST_CASE("arch params: snapshot and restore round-trip") {
  SupernetSpec spec;
  spec.num_layers = 2;
  Supernet net(spec, 17);
  ArchParams p = net.arch_params();
  p.validate();
  CHECK(p.alpha.size() == 8);
  CHECK(p.beta.at(NodeId{2, 2}).size() == 8);
  p.alpha.at(NodeId{0, 1})[3] = 9.0;
  net.set_arch_params(p);
  CHECK(net.alpha(NodeId{0, 1}).data()[3] == 9.0);
}
