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
#include "dcss/tensor.hpp"

#include <algorithm>
#include <numeric>

namespace dcss {

namespace {
index_t checked_numel(const std::vector<index_t>& shape) {
  index_t n = 1;
  for (index_t d : shape) {
    DCSS_CHECK(d >= 0, "tensor: negative extent in shape ", shape_str(shape));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<index_t> shape, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  index_t n = checked_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), 0.0);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t({1}, requires_grad);
  t.data()[0] = value;
  return t;
}

Tensor Tensor::full(std::vector<index_t> shape, double value,
                    bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(std::vector<index_t> shape, std::vector<double> values,
                    bool requires_grad) {
  index_t n = checked_numel(shape);
  DCSS_CHECK(static_cast<std::size_t>(n) == values.size(),
             "tensor: shape ", shape_str(shape), " expects ", n,
             " values, got ", values.size());
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

const std::vector<index_t>& Tensor::shape() const {
  DCSS_CHECK(defined(), "tensor: undefined");
  return impl_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

index_t Tensor::dim(int i) const {
  const auto& s = shape();
  DCSS_CHECK(i >= 0 && i < static_cast<int>(s.size()),
             "tensor: dim ", i, " out of range for shape ", shape_str(s));
  return s[static_cast<std::size_t>(i)];
}

index_t Tensor::numel() const {
  return static_cast<index_t>(impl_->data.size());
}

bool Tensor::requires_grad() const { return defined() && impl_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  DCSS_CHECK(defined(), "tensor: undefined");
  impl_->requires_grad = v;
}

std::vector<double>& Tensor::data() const {
  DCSS_CHECK(defined(), "tensor: undefined");
  return impl_->data;
}

std::vector<double>& Tensor::grad() const {
  DCSS_CHECK(defined(), "tensor: undefined");
  if (impl_->grad.size() != impl_->data.size()) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  }
  return impl_->grad;
}

bool Tensor::has_grad() const {
  return defined() && impl_->grad.size() == impl_->data.size();
}

void Tensor::zero_grad() const {
  // Releases the buffer entirely; a parameter is "touched" this step only if
  // some backward rule reallocates it. Optimizers skip untouched parameters.
  if (defined()) impl_->grad.clear();  // capacity kept for the next step
}

double Tensor::item() const {
  DCSS_CHECK(numel() == 1, "tensor: item() on shape ", shape_str(shape()));
  return data()[0];
}

Tensor Tensor::detached_copy() const {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = shape();
  t.impl_->data = data();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tensor::copy_values_from(const Tensor& other) const {
  DCSS_CHECK(same_shape(*this, other), "tensor: copy shape mismatch ",
             shape_str(shape()), " vs ", shape_str(other.shape()));
  impl_->data = other.data();
}

index_t Tensor::offset4(index_t n, index_t c, index_t h, index_t w) const {
  const auto& s = shape();
  return ((n * s[1] + c) * s[2] + h) * s[3] + w;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

std::string shape_str(const std::vector<index_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void Tape::record(std::function<void()> backward_fn) {
  ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  DCSS_CHECK(loss.defined() && loss.numel() == 1,
             "backward: target must be a scalar, got shape ",
             loss.defined() ? shape_str(loss.shape()) : "undefined");
  DCSS_CHECK(loss.requires_grad(),
             "backward: target does not require grad (no path to parameters)");
  loss.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  clear();
}

}  // namespace dcss
