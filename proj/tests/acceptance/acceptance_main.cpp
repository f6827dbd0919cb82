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
//
// Acceptance suite: one self-contained check per shipped guarantee, one
// pass/fail line each. Run with no arguments for the full gauntlet or pass
// criterion numbers to run a subset (e.g. `acceptance 3 5 8`).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "dcss/config.hpp"
#include "dcss/correlation.hpp"
#include "dcss/decode.hpp"
#include "dcss/metrics.hpp"
#include "dcss/search.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dcss;
using namespace dcss::testing;

namespace {

// ---------------------------------------------------------------------------
// Regression anchors, recorded from the first full run of this suite on the
// reference build (Release, default flags; see README). A NaN anchor makes
// the owning criterion fail and print the measured value to pin.
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPinnedStudyRho = 0.34232338204585494;
constexpr double kPinnedStudyTau = 0.14285714285714285;  // 4 of 28 pairs net
constexpr int kPinnedStudyTies = 0;
const char* const kPinnedNote =
    "anchored on the reference build; rerecord after intentional changes";

struct Check {
  bool ok = true;
  std::ostringstream detail;

  template <class T>
  Check& operator<<(const T& v) {
    detail << v;
    return *this;
  }
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " FAILED{" << what << "}";
    }
  }
};

double wall_seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// --- 1. autodiff soundness --------------------------------------------------

Check criterion1_autodiff() {
  Check c;
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  const double secs = wall_seconds([&] {
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(9000 + static_cast<std::uint64_t>(seed));
      auto project = [](Tape* t, const Tensor& y, const Tensor& dir) {
        return ops::sum(t, ops::mul(t, y, dir));
      };
      {
        Tensor a = random_tensor({2, 3}, rng);
        Tensor b = random_tensor({2, 3}, rng);
        Tensor s = random_tensor({1}, rng);
        Tensor dir = random_tensor({2, 3}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          Tensor u = ops::mul(t, ops::add(t, a, b), ops::sub(t, a, b));
          Tensor v = ops::scalar_mul(t, ops::affine(t, u, 0.8, 0.1), s);
          return ops::add(t, project(t, v, dir), ops::select(t, v, 1));
        };
        worst = std::max(worst, fd_max_rel_err(loss, {a, b, s}));
      }
      {
        Tensor x = random_tensor_no_kink({3, 4}, rng);
        Tensor dir = random_tensor({3, 4}, rng, -1, 1, false);
        auto loss = [&](Tape* t) { return project(t, ops::relu(t, x), dir); };
        worst = std::max(worst, fd_max_rel_err(loss, {x}));
      }
      {
        Tensor x = random_tensor({5}, rng, 0.4, 2.5);
        Tensor dir = random_tensor({5}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          Tensor y = ops::add(t, ops::sigmoid(t, x), ops::log(t, x));
          return project(t, ops::add(t, y, ops::softplus(t, x)), dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {x}));
      }
      {
        Tensor x = random_tensor({7}, rng, -2, 2);
        Tensor dir = random_tensor({7}, rng, -1, 1, false);
        std::vector<std::uint8_t> mask = {1, 1, 0, 1, 0, 1, 1};
        auto loss = [&](Tape* t) {
          Tensor w = ops::add(t, ops::softmax(t, x, 0),
                              ops::masked_softmax(t, x, mask));
          return project(t, w, dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {x}));
      }
      {
        Tensor a = random_tensor({1, 2, 3, 3}, rng);
        Tensor b = random_tensor({1, 2, 3, 3}, rng);
        Tensor dir = random_tensor({1, 4, 3, 3}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          return project(t, ops::concat(t, {a, b}, 1), dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {a, b}));
      }
      {
        Tensor x = random_tensor({1, 4, 3, 3}, rng);
        Tensor y = random_tensor({1, 2, 3, 3}, rng);
        Tensor dir = random_tensor({1, 4, 3, 3}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          Tensor g = ops::channel_gather(t, x, {0, 2});
          return project(
              t, ops::channel_scatter_merge(t, ops::mul(t, g, y), x, {0, 2}),
              dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {x, y}));
      }
      {
        Tensor x = random_tensor({1, 2, 5, 5}, rng);
        Tensor w3 = random_tensor({2, 2, 3, 3}, rng);
        Tensor wd = random_tensor({2, 1, 5, 5}, rng);
        Tensor w1 = random_tensor({3, 2, 1, 1}, rng);
        Tensor dir = random_tensor({1, 3, 5, 5}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          Tensor y = ops::conv2d(t, x, w3, 1, 1, 1);
          y = ops::conv2d(t, y, wd, 1, 2, 2);
          y = ops::conv2d(t, y, w1, 1, 0, 1);
          return project(t, y, dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {x, w3, wd, w1}));
      }
      {
        Tensor x = random_tensor({1, 2, 6, 6}, rng);
        Tensor w = random_tensor({2, 2, 3, 3}, rng);
        Tensor dir = random_tensor({1, 2, 3, 3}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          return project(t, ops::conv2d(t, x, w, 2, 1, 1), dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {x, w}));
      }
      {
        Tensor x = random_tensor({1, 2, 3, 3}, rng);
        Tensor dir = random_tensor({1, 2, 6, 6}, rng, -1, 1, false);
        auto loss = [&](Tape* t) {
          return project(t, ops::bilinear_upsample(t, x, 2), dir);
        };
        worst = std::max(worst, fd_max_rel_err(loss, {x}));
      }
      {
        Tensor x = random_tensor({2, 2, 3, 3}, rng);
        Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
        Tensor beta = random_tensor({2}, rng);
        Tensor dir = random_tensor({2, 2, 3, 3}, rng, -1, 1, false);
        auto train_loss = [&](Tape* t) {
          Tensor rm({2}), rv = Tensor::full({2}, 1.0);
          return project(t, ops::batch_norm(t, x, gamma, beta, rm, rv, true),
                         dir);
        };
        worst = std::max(worst, fd_max_rel_err(train_loss, {x, gamma, beta}));
        Tensor rm = random_tensor({2}, rng, -0.3, 0.3, false);
        Tensor rv = random_tensor({2}, rng, 0.6, 1.4, false);
        auto eval_loss = [&](Tape* t) {
          return project(t, ops::batch_norm(t, x, gamma, beta, rm, rv, false),
                         dir);
        };
        worst = std::max(worst, fd_max_rel_err(eval_loss, {x, gamma, beta}));
      }
      {
        Tensor logits = random_tensor({1, 4, 2, 2}, rng, -2, 2);
        LabelMap labels(1, 2, 2);
        labels.v = {0, 3, 255, 2};
        auto loss = [&](Tape* t) { return ops::cross_entropy(t, logits, labels); };
        worst = std::max(worst, fd_max_rel_err(loss, {logits}));
      }
    }
  });
  c.require(worst < kTol, cat("max rel err ", worst, " >= 1e-4"));
  c.require(secs < 60.0, cat("runtime ", secs, "s >= 60s"));
  c << "max rel err " << worst << ", " << secs << "s";
  return c;
}

// --- 2. relaxation identities -----------------------------------------------

Check criterion2_relaxation() {
  Check c;
  Rng rng(2061);
  for (int trial = 0; trial < 200; ++trial) {
    const index_t n = trial % 2 == 0 ? 6 : 4 * (1 + trial % 14);
    Tensor logits = random_tensor({n}, rng, -40.0, 40.0, false);
    Tensor w = ops::softmax(nullptr, logits, 0);
    double total = 0.0;
    for (double v : w.data()) {
      total += v;
      c.require(v >= 0.0, "negative probability");
    }
    c.require(std::abs(total - 1.0) < 1e-12, cat("sum ", total));
    Tensor shifted = logits.detached_copy();
    const double shift = rng.uniform(-90.0, 90.0);
    for (auto& v : shifted.data()) v += shift;
    Tensor ws = ops::softmax(nullptr, shifted, 0);
    c.require(max_abs_diff(w, ws) < 1e-12, "not shift-invariant");
  }

  // Full-ratio mixture equals the plain operator blend.
  Rng mix_rng(2062);
  MixtureLayer mix;
  mix.init(8, 1.0, mix_rng);
  for (auto& v : mix.alpha.data()) v = mix_rng.uniform(-1.0, 1.0);
  Tensor x = random_tensor({2, 8, 6, 6}, mix_rng, -1.0, 1.0, false);
  Tensor got = mix.forward(nullptr, x, false);
  double denom = 0.0;
  for (double a : mix.alpha.data()) denom += std::exp(a);
  Tensor want(x.shape());
  for (std::size_t o = 0; o < mix.ops.size(); ++o) {
    Tensor yo = mix.ops[o].forward(nullptr, x, false);
    const double wo = std::exp(mix.alpha.data()[o]) / denom;
    for (std::size_t i = 0; i < want.data().size(); ++i) {
      want.data()[i] += wo * yo.data()[i];
    }
  }
  const double mix_err = max_abs_diff(got, want);
  c.require(mix_err < 1e-8, cat("full-ratio mixture off by ", mix_err));

  // Partial-ratio bypass channels are untouched bits.
  MixtureLayer part;
  part.init(8, 0.25, mix_rng);
  Tensor y = part.forward(nullptr, x, true);
  std::vector<bool> masked(8, false);
  for (index_t ch : part.mask) masked[static_cast<std::size_t>(ch)] = true;
  for (index_t n = 0; n < 2; ++n) {
    for (index_t ch = 0; ch < 8; ++ch) {
      if (masked[static_cast<std::size_t>(ch)]) continue;
      for (index_t p = 0; p < 36; ++p) {
        const double a = x.data()[x.offset4(n, ch, p / 6, p % 6)];
        const double b = y.data()[y.offset4(n, ch, p / 6, p % 6)];
        c.require(std::memcmp(&a, &b, sizeof(double)) == 0,
                  "bypass channel not bit-exact");
      }
    }
  }
  c << "200 distributions, mixture err " << mix_err;
  return c;
}

// --- 3. edge-count law --------------------------------------------------------

Check criterion3_edges() {
  Check c;
  for (int L : {1, 2, 4, 14}) {
    const index_t want = 8LL * L * (L + 1);
    const index_t got = static_cast<index_t>(list_candidate_edges(L).size());
    c.require(got == want, cat("L=", L, ": ", got, " != ", want));
    SupernetSpec spec;
    spec.num_layers = L;
    c.require(spec.total_edges() == want, "spec edge count");
  }
  c.require(SupernetSpec{}.total_edges() == 1680, "1680 at L=14");
  c << "8L(L+1) exact for L in {1,2,4,14}";
  return c;
}

// --- 4. degenerate-sampling equivalence --------------------------------------

Check criterion4_degenerate() {
  Check c;
  double err = 0.0;
  const double secs = wall_seconds([&] {
    SupernetSpec spec;
    spec.num_layers = 2;
    spec.channel_ratio = 1.0;
    spec.n_paths = in_degree(2);
    Supernet net(spec, 4001);
    Rng rng(4002);
    Tensor images = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0, false);
    Tensor full = net.forward(nullptr, images, ForwardMode::kFull, false);
    Rng paths(4003);
    Tensor sampled = net.forward(nullptr, images, ForwardMode::kSampled, false,
                                 2.5, &paths);
    err = max_abs_diff(full, sampled);
  });
  c.require(err < 1e-8, cat("max diff ", err));
  c.require(secs < 60.0, cat("runtime ", secs, "s"));
  c << "max |full - sampled| " << err << ", " << secs << "s";
  return c;
}

// --- 5. regularizer closed forms ----------------------------------------------

Check criterion5_regularizers() {
  Check c;
  {
    Tensor uniform({6}, true);
    const double la = reg_alpha(nullptr, {uniform}).item();
    c.require(std::abs(la - std::log(6.0)) < 1e-8, cat("uniform ", la));
    Tensor onehot({6}, true);
    onehot.data()[4] = 50.0;
    const double lo = reg_alpha(nullptr, {onehot}).item();
    c.require(lo < 1e-8, cat("one-hot ", lo));
  }
  {
    Tensor zero = Tensor::from({1}, {0.0}, true);
    const double lb = reg_beta(nullptr, {zero}).item();
    c.require(std::abs(lb - 0.5 * std::log(2.0)) < 1e-12, cat("beta0 ", lb));
    Tensor up = Tensor::from({1}, {50.0}, true);
    Tensor down = Tensor::from({1}, {-50.0}, true);
    c.require(reg_beta(nullptr, {up}).item() < 1e-18, "beta +50 limit");
    c.require(reg_beta(nullptr, {down}).item() < 1e-18, "beta -50 limit");
  }
  {
    Tensor inside({4}, true);  // D = 2.0
    c.require(reg_con(nullptr, {inside}, 3).item() == 0.0, "D=2 hinge");
    Tensor starved = Tensor::from({1}, {0.0}, true);  // D = 0.5
    c.require(reg_con(nullptr, {starved}, 3).item() == 0.5, "D=0.5 hinge");
    std::vector<double> vals(7, 0.0);
    vals[6] = std::log(0.7 / 0.3);  // D = 3.7
    Tensor over = Tensor::from({7}, vals, true);
    const double lc = reg_con(nullptr, {over}, 3).item();
    c.require(std::abs(lc - 0.7) < 1e-12, cat("D=3.7 hinge ", lc));
  }
  c << "alpha/beta/con closed forms hold";
  return c;
}

// --- 6. decoder fidelity -------------------------------------------------------

ArchParams random_arch_params(int L, Rng& rng) {
  ArchParams p;
  p.num_layers = L;
  for (int l = 1; l <= L; ++l) {
    for (int s = 0; s < 4; ++s) {
      const NodeId id{s, l};
      std::vector<double> a(6);
      for (auto& v : a) v = rng.uniform(-1.0, 1.0);
      p.alpha[id] = std::move(a);
      std::vector<double> b(static_cast<std::size_t>(in_degree(l)));
      for (auto& v : b) v = rng.uniform(-1.0, 1.0);
      p.beta[id] = std::move(b);
    }
  }
  return p;
}

std::set<Edge> brute_force_kept(const ArchParams& p) {
  std::set<NodeId> live;
  for (int s = 0; s < 4; ++s) live.insert(NodeId{s, p.num_layers});
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [dst, betas] : p.beta) {
      if (!live.count(dst)) continue;
      for (int e = 0; e < static_cast<int>(betas.size()); ++e) {
        if (betas[static_cast<std::size_t>(e)] < 0.0) continue;
        const NodeId src = edge_source(e);
        if (src.layer > 0 && live.insert(src).second) changed = true;
      }
    }
  }
  std::set<Edge> kept;
  for (const auto& [dst, betas] : p.beta) {
    if (!live.count(dst)) continue;
    for (int e = 0; e < static_cast<int>(betas.size()); ++e) {
      if (betas[static_cast<std::size_t>(e)] >= 0.0) {
        kept.insert({edge_source(e), dst});
      }
    }
  }
  return kept;
}

Check criterion6_decoder() {
  Check c;
  Rng rng(6001);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int L = 1 + static_cast<int>(rng.below(4));
    ArchParams p = random_arch_params(L, rng);
    if (decode_connections(p, /*strict=*/true) != brute_force_kept(p)) {
      ++mismatches;
    }
  }
  c.require(mismatches == 0, cat(mismatches, " mismatched trials"));
  c << "1000 random sign patterns, exact set equality";
  return c;
}

// --- 7. supernet / stand-alone equivalence -------------------------------------

Check criterion7_equivalence() {
  Check c;
  SupernetSpec spec;
  spec.num_layers = 2;
  spec.channel_ratio = 1.0;
  Supernet super(spec, 7001);
  Rng rng(7002);
  ArchParams p = super.arch_params();
  for (auto& [id, a] : p.alpha) {
    std::fill(a.begin(), a.end(), 0.0);
    a[rng.below(6)] = 50.0;
  }
  for (auto& [id, b] : p.beta) {
    std::fill(b.begin(), b.end(), -50.0);
    const int strong = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < strong; ++i) b[rng.below(b.size())] = 50.0;
  }
  super.set_arch_params(p);
  Tensor images = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0, false);
  Tensor relaxed = super.forward(nullptr, images, ForwardMode::kFull, false);
  DecodedArchitecture arch = decode(p, spec, false, "acceptance");
  StandaloneNet net = StandaloneNet::inherit(arch, super);
  Tensor discrete = net.forward(nullptr, images, false);
  const double err = max_abs_diff(relaxed, discrete);
  c.require(err < 1e-5, cat("max logit diff ", err));
  c << "max logit diff " << err;
  return c;
}

// --- 8. statistics oracles -------------------------------------------------------

Check criterion8_statistics() {
  Check c;
  Rng rng(8001);
  auto two_pass = [](const std::vector<double>& xs,
                     const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      cov += (xs[i] - mx) * (ys[i] - my);
      vx += (xs[i] - mx) * (xs[i] - mx);
      vy += (ys[i] - my) * (ys[i] - my);
    }
    return cov / std::sqrt(vx * vy);
  };
  auto enumerated = [](const std::vector<double>& xs,
                       const std::vector<double>& ys) {
    long con = 0, dis = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t j = i + 1; j < xs.size(); ++j) {
        if ((xs[i] < xs[j] && ys[i] < ys[j]) || (xs[j] < xs[i] && ys[j] < ys[i])) {
          ++con;
        } else if ((xs[i] < xs[j] && ys[j] < ys[i]) ||
                   (xs[j] < xs[i] && ys[i] < ys[j])) {
          ++dis;
        }
      }
    }
    return static_cast<double>(con - dis) /
           (0.5 * xs.size() * (xs.size() - 1));
  };

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> xs(n), ys(n);
    for (auto& v : xs) v = rng.uniform(-4.0, 4.0);
    for (auto& v : ys) v = rng.uniform(-4.0, 4.0);
    c.require(std::abs(kendall(xs, ys) - enumerated(xs, ys)) < 1e-10,
              "kendall oracle");
    c.require(std::abs(pearson(xs, ys) - two_pass(xs, ys)) < 1e-10,
              "pearson oracle");
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.below(30);
    std::vector<double> xs(n), ys(n), fx(n), ax(n);
    for (auto& v : xs) v = rng.uniform(0.0, 1.0);
    for (auto& v : ys) v = rng.uniform(-2.0, 2.0);
    const double a = rng.uniform(0.2, 5.0), b = rng.uniform(-3.0, 3.0);
    for (std::size_t i = 0; i < n; ++i) {
      fx[i] = xs[i] < 0.5 ? 2.0 * xs[i] : 1.0 + 7.0 * (xs[i] - 0.5);  // monotone
      ax[i] = a * xs[i] + b;
    }
    c.require(kendall(fx, ys) == kendall(xs, ys), "monotone invariance");
    c.require(std::abs(pearson(ax, ys) - pearson(xs, ys)) < 1e-12,
              "affine invariance");
  }
  c << "100 oracle vectors + 100 invariance trials";
  return c;
}

// --- 9. end-to-end desk experiment ----------------------------------------------

double majority_baseline_miou(const std::vector<SegSample>& val,
                              int num_classes) {
  // Label-histogram oracle: the best constant prediction.
  double best = 0.0;
  for (int cls = 0; cls < num_classes; ++cls) {
    ConfusionMatrix cm(num_classes);
    for (const auto& s : val) {
      LabelMap pred(1, s.label.h, s.label.w);
      std::fill(pred.v.begin(), pred.v.end(), cls);
      cm.update(pred, s.label, kIgnoreIndex);
    }
    best = std::max(best, cm.miou().mean);
  }
  return best;
}

Check criterion9_pipeline() {
  Check c;
  Dataset ds = generate_dataset(DatasetSpec{});  // the default 5-class 64x64 set

  SupernetSpec spec;
  spec.num_layers = 3;
  spec.base_width = 8;
  spec.num_classes = ds.spec.num_classes;

  SearchConfig scfg;
  scfg.epochs = 30;
  scfg.batch_size = 8;
  scfg.seed = 20260808;
  // Desk-scale coefficients. A 30-epoch run has ~750 architecture updates,
  // against ~180k at paper scale, so the gates need a faster Adam rate and
  // stronger coefficients than the paper-protocol defaults to saturate.
  scfg.lr_arch = 0.005;
  scfg.lambda_beta = 0.01;
  scfg.lambda_con = 0.01;

  TrainConfig tcfg;
  tcfg.epochs = 60;
  tcfg.batch_size = 8;
  tcfg.seed = 20260809;

  double s_miou = 0.0, t_miou = 0.0;
  DecodedArchitecture arch;
  const double secs = wall_seconds([&] {
    SearchResult sres = run_search(ds, spec, scfg);
    s_miou = sres.best_val_miou;
    arch = decode(sres.best_arch, spec, false, "acceptance-pipeline");
    StandaloneNet net(arch, tcfg.seed);
    TrainResult tres = train_standalone(net, ds, tcfg);
    t_miou = tres.best_val_miou;
  });

  c.require(secs < 1800.0, cat("pipeline took ", secs, "s >= 1800s"));
  int min_deg = 1 << 20, max_deg = 0;
  for (const auto& [id, deg] : arch.in_degrees()) {
    min_deg = std::min(min_deg, deg);
    max_deg = std::max(max_deg, deg);
  }
  c.require(min_deg >= 1, cat("min in-degree ", min_deg));
  c.require(max_deg <= spec.max_in_degree,
            cat("max in-degree ", max_deg, " > k=", spec.max_in_degree));
  const double baseline = majority_baseline_miou(ds.val, ds.spec.num_classes);
  c.require(t_miou > baseline,
            cat("T-mIoU ", t_miou, " <= baseline ", baseline));
  c << "S-mIoU " << s_miou << ", T-mIoU " << t_miou << ", baseline "
    << baseline << ", in-degree [" << min_deg << "," << max_deg << "], "
    << secs << "s";
  return c;
}

// --- 10. sampling statistics ------------------------------------------------------

Check criterion10_sampling() {
  Check c;
  {
    Rng rng(10001);
    std::vector<double> beta(8, 0.0);
    beta[2] = 10.0;
    int hits = 0;
    for (int t = 0; t < 1000; ++t) {
      hits += sample_paths(beta, 0.01, 1, rng)[0] == 2;
    }
    c.require(hits >= 999, cat("dominant hit rate ", hits, "/1000"));
    c << "cold hits " << hits << "/1000";
  }
  {
    Rng beta_rng(10002);
    std::vector<double> beta(8);
    for (auto& b : beta) b = beta_rng.uniform(0.0, 1.0);
    Rng rng(10003);
    std::vector<int> counts(8, 0);
    for (int t = 0; t < 10000; ++t) {
      ++counts[static_cast<std::size_t>(sample_paths(beta, 100.0, 1, rng)[0])];
    }
    double chi2 = 0.0;
    for (int n : counts) chi2 += (n - 1250.0) * (n - 1250.0) / 1250.0;
    // chi-square 0.99 quantile at 7 dof.
    c.require(chi2 < 18.4753, cat("chi2 ", chi2, " >= 18.4753"));
    c << ", hot chi2 " << chi2;
  }
  return c;
}

// --- 11. determinism ---------------------------------------------------------------

Check criterion11_determinism() {
  Check c;
  const char* bin = std::getenv("DCSS_BIN");
  if (!bin) {
    c.require(false, "DCSS_BIN not set (run through ctest)");
    return c;
  }
  const fs::path dir = fs::temp_directory_path() / "dcss_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);

  nlohmann::json cfg = {
      {"dataset",
       {{"num_classes", 5}, {"height", 32}, {"width", 32},
        {"count_train_a", 8}, {"count_train_b", 4}, {"count_val", 2},
        {"seed", 404}}},
      {"supernet", {{"num_layers", 1}, {"base_width", 4}, {"num_classes", 5}}},
      {"search", {{"epochs", 2}, {"batch_size", 2}, {"seed", 405}}},
      {"train", {{"epochs", 1}, {"batch_size", 2}, {"seed", 406}}},
  };
  const fs::path cfgp = dir / "cfg.json";
  std::ofstream(cfgp) << cfg.dump();

  auto sh = [&](const std::string& args) {
    const std::string cmd =
        std::string(bin) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  auto bytes = [&](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };

  for (const char* tag : {"1", "2"}) {
    c.require(sh(cat("gen-data --config ", cfgp.string(), " --out ",
                     (dir / (std::string("data") + tag)).string())),
              "gen-data run");
  }
  c.require(bytes(dir / "data1/trainA.bin") == bytes(dir / "data2/trainA.bin"),
            "gen-data artifacts differ");
  c.require(bytes(dir / "data1/manifest.json") ==
                bytes(dir / "data2/manifest.json"),
            "manifests differ");

  for (const char* tag : {"1", "2"}) {
    c.require(sh(cat("search --config ", cfgp.string(), " --data ",
                     (dir / "data1").string(), " --out ",
                     (dir / (std::string("run") + tag)).string())),
              "search run");
  }
  c.require(bytes(dir / "run1/best.ckpt") == bytes(dir / "run2/best.ckpt"),
            "search best.ckpt differs");
  c.require(bytes(dir / "run1/last.ckpt") == bytes(dir / "run2/last.ckpt"),
            "search last.ckpt differs");
  c.require(bytes(dir / "run1/metrics.csv") == bytes(dir / "run2/metrics.csv"),
            "search metrics differ");

  c.require(sh(cat("decode --checkpoint ", (dir / "run1/best.ckpt").string(),
                   " --out ", (dir / "arch.json").string())),
            "decode run");
  for (const char* tag : {"1", "2"}) {
    c.require(sh(cat("train --arch ", (dir / "arch.json").string(),
                     " --config ", cfgp.string(), " --data ",
                     (dir / "data1").string(), " --out ",
                     (dir / (std::string("train") + tag)).string())),
              "train run");
  }
  c.require(bytes(dir / "train1/weights.ckpt") ==
                bytes(dir / "train2/weights.ckpt"),
            "train weights differ");
  c.require(bytes(dir / "train1/result.json") ==
                bytes(dir / "train2/result.json"),
            "train results differ");
  c << "gen-data, search, train byte-identical across reruns";
  return c;
}

// --- 12. correlation harness ---------------------------------------------------------

Check criterion12_correlation() {
  Check c;
  DatasetSpec dspec;
  dspec.height = 32;
  dspec.width = 32;
  dspec.count_train_a = 60;
  dspec.count_train_b = 30;
  dspec.count_val = 20;
  dspec.seed = 12001;
  Dataset ds = generate_dataset(dspec);

  SupernetSpec spec;
  spec.num_layers = 2;
  spec.base_width = 8;
  spec.num_classes = dspec.num_classes;

  SearchConfig scfg;
  scfg.epochs = 15;
  scfg.batch_size = 8;
  scfg.lr_arch = 0.005;  // same desk-scale gate settings as the pipeline
  scfg.lambda_beta = 0.01;
  scfg.lambda_con = 0.01;

  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.batch_size = 8;

  StudyConfig study{8, 52000, 2};
  CorrelationReport report;
  const double secs = wall_seconds(
      [&] { report = run_correlation_study(ds, spec, scfg, tcfg, study); });

  c.require(report.records.size() == 8, "expected 8 trials");
  c.require(report.excluded == 0, cat(report.excluded, " trials failed"));
  c.require(std::abs(report.rho) <= 1.0, cat("rho ", report.rho));
  c.require(std::abs(report.tau) <= 1.0, cat("tau ", report.tau));
  if (std::isnan(kPinnedStudyRho) || std::isnan(kPinnedStudyTau)) {
    char rec[128];
    std::snprintf(rec, sizeof(rec), "anchors unpinned; record rho=%.17g tau=%.17g ties=%d",
                  report.rho, report.tau, report.ties);
    c.require(false, rec);
  } else {
    c.require(std::abs(report.rho - kPinnedStudyRho) < 1e-9,
              cat("rho ", report.rho, " drifted from anchor ",
                  kPinnedStudyRho, " (", kPinnedNote, ")"));
    c.require(std::abs(report.tau - kPinnedStudyTau) < 1e-9,
              cat("tau ", report.tau, " drifted from anchor ",
                  kPinnedStudyTau));
    c.require(report.ties == kPinnedStudyTies,
              cat("ties ", report.ties, " != ", kPinnedStudyTies));
  }
  c << "rho " << report.rho << ", tau " << report.tau << ", ties "
    << report.ties << ", " << secs << "s";
  return c;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Check()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "autodiff-soundness", criterion1_autodiff},
      {2, "relaxation-identities", criterion2_relaxation},
      {3, "edge-count-law", criterion3_edges},
      {4, "degenerate-sampling-equivalence", criterion4_degenerate},
      {5, "regularizer-closed-forms", criterion5_regularizers},
      {6, "decoder-fidelity", criterion6_decoder},
      {7, "supernet-standalone-equivalence", criterion7_equivalence},
      {8, "statistics-oracles", criterion8_statistics},
      {9, "end-to-end-desk-experiment", criterion9_pipeline},
      {10, "sampling-statistics", criterion10_sampling},
      {11, "determinism", criterion11_determinism},
      {12, "correlation-harness", criterion12_correlation},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0, ran = 0;
  for (const auto& criterion : criteria) {
    if (!selected.empty() && !selected.count(criterion.id)) continue;
    ++ran;
    Check result;
    double secs = 0.0;
    try {
      secs = wall_seconds([&] { result = criterion.run(); });
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail << "exception: " << e.what();
    }
    std::printf("[%s] %2d %-36s %s (%.1fs)\n", result.ok ? "PASS" : "FAIL",
                criterion.id, criterion.name, result.detail.str().c_str(),
                secs);
    std::fflush(stdout);
    failures += !result.ok;
  }
  std::printf("ACCEPTANCE: %d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
