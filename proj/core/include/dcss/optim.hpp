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
#ifndef DCSS_OPTIM_HPP_
#define DCSS_OPTIM_HPP_

#include <map>
#include <string>

#include "dcss/checkpoint.hpp"
#include "dcss/tensor.hpp"

namespace dcss {

/// Polynomial learning-rate decay: base_lr * (1 - iter/max_iter)^power.
/// Iterations past max_iter clamp to zero.
struct LrSchedule {
  double base_lr = 0.01;
  index_t max_iter = 1;
  double power = 0.9;
};

double poly_lr(index_t iter, const LrSchedule& schedule);

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;  // applied only where NamedTensor::weight_decay
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Momentum SGD: v <- m*v + g + wd*p; p <- p - lr*v.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig cfg) : cfg_(cfg) {}

  void step(const NamedTensorList& params, double lr);

  const SgdConfig& config() const { return cfg_; }
  NamedTensorList state_tensors(const std::string& prefix) const;
  void load_state(const std::string& prefix,
                  const std::map<std::string, Tensor>& tensors);

 private:
  SgdConfig cfg_;
  std::map<std::string, Tensor> velocity_;
};

/// Bias-corrected Adam. Weight decay is intentionally absent: it is never
/// applied to architecture parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

  void step(const NamedTensorList& params, double lr);

  index_t step_count() const { return t_; }
  NamedTensorList state_tensors(const std::string& prefix) const;
  void load_state(const std::string& prefix,
                  const std::map<std::string, Tensor>& tensors, index_t t);

 private:
  AdamConfig cfg_;
  index_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace dcss

#endif  // DCSS_OPTIM_HPP_
