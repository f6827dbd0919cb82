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
#include "dcss/search.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dcss/metrics.hpp"

namespace dcss {

namespace {
constexpr std::uint64_t kTagShuffleA = 0x10;
constexpr std::uint64_t kTagShuffleB = 0x11;
constexpr std::uint64_t kTagAugA = 0x12;
constexpr std::uint64_t kTagAugB = 0x13;
constexpr std::uint64_t kTagPath = 0x14;

std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void SearchConfig::validate() const {
  DCSS_CHECK(epochs >= 0, "search: epochs must be >= 0");
  DCSS_CHECK(batch_size >= 1, "search: batch_size must be >= 1");
  DCSS_CHECK(lr_w > 0.0 && lr_arch > 0.0, "search: learning rates must be > 0");
  DCSS_CHECK(weight_decay_w >= 0.0, "search: weight decay must be >= 0");
  DCSS_CHECK(momentum_w >= 0.0 && momentum_w < 1.0,
             "search: momentum must be in [0,1)");
  DCSS_CHECK(lambda_alpha >= 0.0 && lambda_beta >= 0.0 && lambda_con >= 0.0,
             "search: regularizer coefficients must be >= 0");
}

nlohmann::json SearchConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr_w", lr_w},
          {"lr_arch", lr_arch},
          {"weight_decay_w", weight_decay_w},
          {"momentum_w", momentum_w},
          {"lambda_alpha", lambda_alpha},
          {"lambda_beta", lambda_beta},
          {"lambda_con", lambda_con},
          {"sampler",
           {{"tau_start", sampler.tau_start},
            {"tau_end", sampler.tau_end},
            {"n_paths", sampler.n_paths}}},
          {"seed", seed}};
}

SearchConfig SearchConfig::from_json(const nlohmann::json& j) {
  SearchConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_w = j.value("lr_w", c.lr_w);
  c.lr_arch = j.value("lr_arch", c.lr_arch);
  c.weight_decay_w = j.value("weight_decay_w", c.weight_decay_w);
  c.momentum_w = j.value("momentum_w", c.momentum_w);
  c.lambda_alpha = j.value("lambda_alpha", c.lambda_alpha);
  c.lambda_beta = j.value("lambda_beta", c.lambda_beta);
  c.lambda_con = j.value("lambda_con", c.lambda_con);
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    c.sampler.tau_start = s.value("tau_start", c.sampler.tau_start);
    c.sampler.tau_end = s.value("tau_end", c.sampler.tau_end);
    c.sampler.n_paths = s.value("n_paths", c.sampler.n_paths);
  }
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Tensor reg_alpha(Tape* tape, const std::vector<Tensor>& alphas) {
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& a : alphas) {
    Tensor w = ops::softmax(tape, a, 0);
    Tensor neg_entropy = ops::sum(tape, ops::mul(tape, w, ops::log(tape, w)));
    acc = ops::add(tape, acc, ops::affine(tape, neg_entropy, -1.0, 0.0));
  }
  return acc;
}

Tensor reg_beta(Tape* tape, const std::vector<Tensor>& betas) {
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& b : betas) {
    Tensor importance = ops::sigmoid(tape, b);
    // -ln(sigma(b)) == softplus(-b), stable at both tails.
    Tensor neg_log = ops::softplus(tape, ops::affine(tape, b, -1.0, 0.0));
    acc = ops::add(tape, acc,
                   ops::sum(tape, ops::mul(tape, importance, neg_log)));
  }
  return acc;
}

Tensor reg_con(Tape* tape, const std::vector<Tensor>& betas, int k) {
  DCSS_CHECK(k >= 1, "reg_con: k must be >= 1");
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& b : betas) {
    Tensor degree = ops::sum(tape, ops::sigmoid(tape, b));
    Tensor under = ops::relu(tape, ops::affine(tape, degree, -1.0, 1.0));
    Tensor over = ops::relu(tape, ops::affine(tape, degree, 1.0,
                                              -static_cast<double>(k)));
    acc = ops::add(tape, acc, ops::add(tape, under, over));
  }
  return acc;
}

Batch stack_samples(const std::vector<SegSample>& samples,
                    const std::vector<index_t>& indices) {
  DCSS_CHECK(!indices.empty(), "stack_samples: empty batch");
  const index_t H = samples[0].image.dim(1);
  const index_t W = samples[0].image.dim(2);
  const index_t B = static_cast<index_t>(indices.size());
  Batch batch;
  batch.images = Tensor({B, 3, H, W});
  batch.labels = LabelMap(B, H, W);
  for (index_t i = 0; i < B; ++i) {
    const auto& s =
        samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])];
    DCSS_CHECK(s.image.dim(1) == H && s.image.dim(2) == W,
               "stack_samples: inconsistent sample sizes");
    std::memcpy(batch.images.data().data() + i * 3 * H * W,
                s.image.data().data(),
                static_cast<std::size_t>(3 * H * W) * sizeof(double));
    std::memcpy(batch.labels.v.data() + i * H * W, s.label.v.data(),
                static_cast<std::size_t>(H * W) * sizeof(std::int32_t));
  }
  return batch;
}

std::string metrics_csv_header() {
  return "epoch,trainA_ce,trainB_ce,L_alpha,L_beta,L_con,tau,val_miou";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  return cat(m.epoch, ",", fmt_g17(m.train_a_ce), ",", fmt_g17(m.train_b_ce),
             ",", fmt_g17(m.l_alpha), ",", fmt_g17(m.l_beta), ",",
             fmt_g17(m.l_con), ",", fmt_g17(m.tau), ",", fmt_g17(m.val_miou));
}

SearchState::SearchState(const SupernetSpec& spec, const SearchConfig& cfg)
    : net(spec, cfg.seed),
      opt_w(SgdConfig{cfg.momentum_w, cfg.weight_decay_w}),
      opt_arch(cfg.adam) {}

namespace {

void zero_all_grads(Supernet& net) {
  for (auto& p : net.weight_params()) p.tensor.zero_grad();
  for (auto& p : net.arch_param_tensors()) {
    p.tensor.zero_grad();
  }
}

void check_finite_loss(double v, const char* what, index_t iter) {
  if (!std::isfinite(v)) {
    throw NumericError(cat("search: non-finite ", what, " at iteration ", iter));
  }
}

}  // namespace

StepMetrics search_step(SearchState& state, const SearchConfig& cfg,
                        const Batch& batch_a, const Batch& batch_b, double tau,
                        double lr_w) {
  StepMetrics metrics;
  Supernet& net = state.net;

  // Phase 1: convolutional weights on trainA. The forward also deposits
  // gradients on (alpha, beta); those are discarded below rather than applied.
  {
    Tape tape;
    Rng path_rng(hash_seed({cfg.seed, kTagPath, 0,
                            static_cast<std::uint64_t>(state.iter)}));
    Tensor logits = net.forward(&tape, batch_a.images, ForwardMode::kSampled,
                                /*training=*/true, tau, &path_rng);
    Tensor ce = ops::cross_entropy(&tape, logits, batch_a.labels, kIgnoreIndex);
    metrics.ce_a = ce.item();
    check_finite_loss(metrics.ce_a, "trainA cross entropy", state.iter);
    tape.backward(ce);
    state.opt_w.step(net.weight_params(), lr_w);
    zero_all_grads(net);
  }

  // Phase 2: architecture parameters on trainB with the regularized loss.
  {
    Tape tape;
    Rng path_rng(hash_seed({cfg.seed, kTagPath, 1,
                            static_cast<std::uint64_t>(state.iter)}));
    Tensor logits = net.forward(&tape, batch_b.images, ForwardMode::kSampled,
                                /*training=*/true, tau, &path_rng);
    Tensor ce = ops::cross_entropy(&tape, logits, batch_b.labels, kIgnoreIndex);
    Tensor la = reg_alpha(&tape, net.all_alphas());
    Tensor lb = reg_beta(&tape, net.all_betas());
    Tensor lc = reg_con(&tape, net.all_betas(), net.spec().max_in_degree);
    metrics.ce_b = ce.item();
    metrics.l_alpha = la.item();
    metrics.l_beta = lb.item();
    metrics.l_con = lc.item();
    check_finite_loss(metrics.ce_b, "trainB cross entropy", state.iter);
    Tensor loss =
        ops::add(&tape, ce, ops::affine(&tape, la, cfg.lambda_alpha, 0.0));
    loss = ops::add(&tape, loss, ops::affine(&tape, lb, cfg.lambda_beta, 0.0));
    loss = ops::add(&tape, loss, ops::affine(&tape, lc, cfg.lambda_con, 0.0));
    tape.backward(loss);
    state.opt_arch.step(net.arch_param_tensors(), cfg.lr_arch);
    zero_all_grads(net);
  }

  ++state.iter;
  return metrics;
}

double evaluate_miou(const std::function<Tensor(const Tensor&)>& forward_eval,
                     const std::vector<SegSample>& samples, int batch_size,
                     int num_classes) {
  DCSS_CHECK(!samples.empty(), "evaluate: empty sample set");
  ConfusionMatrix cm(num_classes);
  const index_t n = static_cast<index_t>(samples.size());
  for (index_t start = 0; start < n; start += batch_size) {
    std::vector<index_t> idx;
    for (index_t i = start; i < std::min<index_t>(n, start + batch_size); ++i) {
      idx.push_back(i);
    }
    Batch batch = stack_samples(samples, idx);
    Tensor logits = forward_eval(batch.images);
    cm.update(argmax_labels(logits), batch.labels, kIgnoreIndex);
  }
  return cm.miou().mean;
}

namespace {

std::vector<index_t> epoch_order(std::size_t count, std::uint64_t seed,
                                 std::uint64_t tag, std::uint64_t round) {
  std::vector<index_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<index_t>(i);
  Rng rng(hash_seed({seed, tag, round}));
  rng.shuffle(order);
  return order;
}

std::vector<SegSample> augment_batch(const std::vector<SegSample>& pool,
                                     const std::vector<index_t>& ids,
                                     const AugmentConfig& aug,
                                     std::uint64_t seed, std::uint64_t tag,
                                     std::uint64_t round) {
  std::vector<SegSample> out;
  out.reserve(ids.size());
  for (index_t id : ids) {
    Rng rng(hash_seed({seed, tag, round, static_cast<std::uint64_t>(id)}));
    out.push_back(augment(pool[static_cast<std::size_t>(id)], aug, rng));
  }
  return out;
}

void save_search_state(SearchState& state, const SearchConfig& cfg,
                       const std::string& path) {
  NamedTensorList extra = state.opt_w.state_tensors("opt_w/");
  for (auto& t : state.opt_arch.state_tensors("opt_arch/")) extra.push_back(t);
  nlohmann::json index = {
      {"epoch", state.epoch},
      {"iter", state.iter},
      {"b_pos", state.b_pos},
      {"adam_t", state.opt_arch.step_count()},
      {"best_val_miou", state.best_val_miou},
      {"best_epoch", state.best_epoch},
      {"search_config", cfg.to_json()},
  };
  state.net.save(path, index, extra);
}

}  // namespace

SearchResult run_search(const Dataset& dataset, const SupernetSpec& spec,
                        const SearchConfig& cfg, const std::string& out_dir,
                        const std::string& resume_dir, int stop_after_epochs) {
  cfg.validate();
  spec.validate();
  DCSS_CHECK(!dataset.train_a.empty() && !dataset.train_b.empty() &&
                 !dataset.val.empty(),
             "search: dataset has an empty split");

  SearchState state(spec, cfg);
  SearchResult result;
  if (!resume_dir.empty()) {
    nlohmann::json index;
    std::map<std::string, Tensor> all;
    state.net = Supernet::load(resume_dir + "/last.ckpt", &index, &all);
    state.opt_w.load_state("opt_w/", all);
    state.opt_arch.load_state("opt_arch/", all,
                              index.at("adam_t").get<index_t>());
    state.epoch = index.at("epoch").get<int>();
    state.iter = index.at("iter").get<index_t>();
    state.b_pos = index.at("b_pos").get<index_t>();
    state.best_val_miou = index.at("best_val_miou").get<double>();
    state.best_epoch = index.at("best_epoch").get<int>();
    if (state.best_epoch >= 0) {
      Checkpoint best = read_checkpoint(resume_dir + "/best.ckpt");
      result.best_arch = arch_params_from_checkpoint(best);
    }
  }

  const AugmentConfig aug{0.5, 2.0, dataset.spec.height, dataset.spec.width,
                          0.5};
  const index_t steps_per_epoch =
      (static_cast<index_t>(dataset.train_a.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  const LrSchedule lr_schedule{cfg.lr_w,
                               std::max<index_t>(1, steps_per_epoch * cfg.epochs),
                               0.9};

  std::ofstream csv;
  if (!out_dir.empty()) {
    const bool append = !resume_dir.empty();
    csv.open(out_dir + "/metrics.csv",
             append ? std::ios::app : std::ios::trunc);
    if (!csv.good()) {
      throw IoError(cat("search: cannot write metrics under '", out_dir, "'"));
    }
    if (!append) csv << metrics_csv_header() << "\n";
  }

  auto eval_net = [&](Supernet& net) {
    return evaluate_miou(
        [&](const Tensor& images) {
          return net.forward(nullptr, images, ForwardMode::kFull,
                             /*training=*/false);
        },
        dataset.val, cfg.batch_size, spec.num_classes);
  };

  auto record_best = [&](double val) {
    if (val > state.best_val_miou) {
      state.best_val_miou = val;
      state.best_epoch = state.epoch;
      result.best_arch = state.net.arch_params();
      if (!out_dir.empty()) {
        state.net.save(out_dir + "/best.ckpt",
                       {{"epoch", state.epoch},
                        {"val_miou", val},
                        {"search_config", cfg.to_json()}});
      }
    }
  };

  if (cfg.epochs == 0 && state.epoch == 0) {
    const double val = eval_net(state.net);
    record_best(val);
    if (!out_dir.empty()) save_search_state(state, cfg, out_dir + "/last.ckpt");
  }

  const std::size_t nb = dataset.train_b.size();
  std::vector<index_t> order_b;
  std::uint64_t order_b_round = ~0ull;
  auto next_b_index = [&]() {
    const std::uint64_t round = state.b_pos / nb;
    if (round != order_b_round || order_b.empty()) {
      order_b = epoch_order(nb, cfg.seed, kTagShuffleB, round);
      order_b_round = round;
    }
    const index_t id = order_b[static_cast<std::size_t>(state.b_pos % nb)];
    ++state.b_pos;
    return id;
  };

  const int epoch_limit = stop_after_epochs >= 0
                              ? std::min(cfg.epochs, stop_after_epochs)
                              : cfg.epochs;
  // state.epoch counts completed epochs; a checkpoint written after epoch e
  // resumes at epoch e+1.
  while (state.epoch < epoch_limit) {
    const double tau = anneal_tau(cfg.sampler, state.epoch, cfg.epochs);
    const auto order_a =
        epoch_order(dataset.train_a.size(), cfg.seed, kTagShuffleA,
                    static_cast<std::uint64_t>(state.epoch));
    EpochMetrics em;
    em.epoch = state.epoch;
    em.tau = tau;

    try {
      for (index_t step = 0; step < steps_per_epoch; ++step) {
        std::vector<index_t> ids_a;
        for (index_t i = step * cfg.batch_size;
             i < std::min<index_t>(static_cast<index_t>(order_a.size()),
                                   (step + 1) * cfg.batch_size);
             ++i) {
          ids_a.push_back(order_a[static_cast<std::size_t>(i)]);
        }
        std::vector<index_t> ids_b;
        for (int i = 0; i < cfg.batch_size; ++i) ids_b.push_back(next_b_index());

        auto batch_a_samples = augment_batch(
            dataset.train_a, ids_a, aug, cfg.seed, kTagAugA,
            static_cast<std::uint64_t>(state.epoch));
        auto batch_b_samples =
            augment_batch(dataset.train_b, ids_b, aug, cfg.seed, kTagAugB,
                          static_cast<std::uint64_t>(state.iter));

        std::vector<index_t> all_a(batch_a_samples.size());
        for (std::size_t i = 0; i < all_a.size(); ++i) {
          all_a[i] = static_cast<index_t>(i);
        }
        std::vector<index_t> all_b(batch_b_samples.size());
        for (std::size_t i = 0; i < all_b.size(); ++i) {
          all_b[i] = static_cast<index_t>(i);
        }
        const double lr_w = poly_lr(state.iter, lr_schedule);
        StepMetrics sm =
            search_step(state, cfg, stack_samples(batch_a_samples, all_a),
                        stack_samples(batch_b_samples, all_b), tau, lr_w);
        em.train_a_ce += sm.ce_a;
        em.train_b_ce += sm.ce_b;
        em.l_alpha += sm.l_alpha;
        em.l_beta += sm.l_beta;
        em.l_con += sm.l_con;
      }
    } catch (const NumericError&) {
      if (!out_dir.empty()) {
        save_search_state(state, cfg, out_dir + "/diagnostic.ckpt");
      }
      throw;
    }

    const double spd = static_cast<double>(steps_per_epoch);
    em.train_a_ce /= spd;
    em.train_b_ce /= spd;
    em.l_alpha /= spd;
    em.l_beta /= spd;
    em.l_con /= spd;
    em.val_miou = eval_net(state.net);
    record_best(em.val_miou);
    result.history.push_back(em);
    if (csv.is_open()) csv << metrics_csv_row(em) << "\n";
    ++state.epoch;
    if (!out_dir.empty()) save_search_state(state, cfg, out_dir + "/last.ckpt");
  }

  if (csv.is_open()) csv.flush();
  result.best_val_miou = state.best_val_miou;
  result.best_epoch = state.best_epoch;
  if (result.best_arch.num_layers == 0) {
    result.best_arch = state.net.arch_params();
  }
  return result;
}

}  // namespace dcss
