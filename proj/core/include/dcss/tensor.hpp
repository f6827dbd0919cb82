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
#ifndef DCSS_TENSOR_HPP_
#define DCSS_TENSOR_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dcss/common.hpp"

namespace dcss {

/// Dense f64 tensor with shared storage. Copying a Tensor aliases the same
/// buffer; use detached_copy() for a deep copy. Feature maps are NCHW,
/// parameters arbitrary rank. The grad buffer is allocated on first access
/// and accumulated into by Tape::backward.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<index_t> shape, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor full(std::vector<index_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<index_t> shape, std::vector<double> values,
                     bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<index_t>& shape() const;
  int rank() const;
  index_t dim(int i) const;
  index_t numel() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  /// Handle semantics: a const Tensor still aliases mutable storage, exactly
  /// like a shared_ptr. Ops hold const handles and write through them.
  std::vector<double>& data() const;

  /// Gradient buffer, zero-initialized on first access.
  std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad() const;

  /// Value of a one-element tensor.
  double item() const;

  /// Deep copy of the values; requires_grad is preserved, grad is not.
  Tensor detached_copy() const;

  /// Copies values from another tensor of identical shape.
  void copy_values_from(const Tensor& other) const;

  /// Identity of the underlying buffer (aliasing check).
  const void* id() const { return impl_.get(); }

  index_t offset4(index_t n, index_t c, index_t h, index_t w) const;

 private:
  struct Impl {
    std::vector<index_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_str(const std::vector<index_t>& shape);

/// Integer segmentation maps (class labels per pixel). Kept apart from Tensor
/// so labels can never leak into differentiable math.
struct LabelMap {
  index_t n = 0, h = 0, w = 0;
  std::vector<std::int32_t> v;

  LabelMap() = default;
  LabelMap(index_t n_, index_t h_, index_t w_)
      : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_ * h_ * w_), 0) {}

  index_t numel() const { return n * h * w; }
  std::int32_t& at(index_t i, index_t y, index_t x) {
    return v[static_cast<std::size_t>((i * h + y) * w + x)];
  }
  std::int32_t at(index_t i, index_t y, index_t x) const {
    return v[static_cast<std::size_t>((i * h + y) * w + x)];
  }
};

/// Reverse-mode tape. Ops record their backward rules in execution order;
/// backward() replays them in reverse, accumulating (+=) into grad buffers,
/// then drops the recorded closures (and the activations they keep alive).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn);
  std::size_t num_ops() const { return ops_.size(); }

  void backward(const Tensor& loss);
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

}  // namespace dcss

#endif  // DCSS_TENSOR_HPP_
