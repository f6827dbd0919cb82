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
#include "dcss/optim.hpp"

#include <cmath>

namespace dcss {

double poly_lr(index_t iter, const LrSchedule& schedule) {
  DCSS_CHECK(schedule.base_lr > 0.0, "poly_lr: base_lr must be positive");
  DCSS_CHECK(schedule.max_iter >= 1, "poly_lr: max_iter must be >= 1");
  DCSS_CHECK(iter >= 0, "poly_lr: negative iteration ", iter);
  if (iter >= schedule.max_iter) return 0.0;
  const double frac = 1.0 - static_cast<double>(iter) /
                                static_cast<double>(schedule.max_iter);
  return schedule.base_lr * std::pow(frac, schedule.power);
}

namespace {
void check_grads(const NamedTensor& p) {
  for (double g : p.tensor.grad()) {
    if (std::isnan(g) || std::isinf(g)) {
      throw NumericError(cat("optimizer: non-finite gradient in parameter '",
                             p.name, "'"));
    }
  }
}
}  // namespace

void SgdOptimizer::step(const NamedTensorList& params, double lr) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;  // untouched by this step's subgraph
    check_grads(p);
    auto it = velocity_.find(p.name);
    if (it == velocity_.end()) {
      it = velocity_.emplace(p.name, Tensor(p.tensor.shape())).first;
    }
    auto& v = it->second.data();
    auto& w = p.tensor.data();
    const auto& g = p.tensor.grad();
    const double wd = p.weight_decay ? cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

NamedTensorList SgdOptimizer::state_tensors(const std::string& prefix) const {
  NamedTensorList out;
  for (const auto& [name, t] : velocity_) {
    out.push_back({prefix + name, t, false});
  }
  return out;
}

void SgdOptimizer::load_state(const std::string& prefix,
                              const std::map<std::string, Tensor>& tensors) {
  velocity_.clear();
  for (const auto& [name, t] : tensors) {
    if (name.rfind(prefix, 0) == 0) {
      velocity_.emplace(name.substr(prefix.size()), t.detached_copy());
    }
  }
}

void AdamOptimizer::step(const NamedTensorList& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    check_grads(p);
    auto it_m = m_.find(p.name);
    if (it_m == m_.end()) {
      it_m = m_.emplace(p.name, Tensor(p.tensor.shape())).first;
      v_.emplace(p.name, Tensor(p.tensor.shape()));
    }
    auto& m = it_m->second.data();
    auto& v = v_.at(p.name).data();
    auto& w = p.tensor.data();
    const auto& g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

NamedTensorList AdamOptimizer::state_tensors(const std::string& prefix) const {
  NamedTensorList out;
  for (const auto& [name, t] : m_) out.push_back({prefix + "m/" + name, t, false});
  for (const auto& [name, t] : v_) out.push_back({prefix + "v/" + name, t, false});
  return out;
}

void AdamOptimizer::load_state(const std::string& prefix,
                               const std::map<std::string, Tensor>& tensors,
                               index_t t) {
  m_.clear();
  v_.clear();
  t_ = t;
  const std::string mp = prefix + "m/";
  const std::string vp = prefix + "v/";
  for (const auto& [name, tensor] : tensors) {
    if (name.rfind(mp, 0) == 0) {
      m_.emplace(name.substr(mp.size()), tensor.detached_copy());
    } else if (name.rfind(vp, 0) == 0) {
      v_.emplace(name.substr(vp.size()), tensor.detached_copy());
    }
  }
}

}  // namespace dcss
