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
#ifndef DCSS_METRICS_HPP_
#define DCSS_METRICS_HPP_

#include <vector>

#include "dcss/tensor.hpp"

namespace dcss {

struct MiouResult {
  double mean = 0.0;
  /// IoU per class; classes absent from both prediction and target carry -1
  /// and are excluded from the mean.
  std::vector<double> per_class;
};

/// Streaming confusion matrix. mIoU over accumulated batches equals mIoU over
/// the concatenation by construction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void update(const LabelMap& pred, const LabelMap& target,
              int ignore_index = 255);
  void merge(const ConfusionMatrix& other);

  index_t count(int target_class, int pred_class) const;
  index_t total_valid() const;
  MiouResult miou() const;

  int num_classes() const { return num_classes_; }

 private:
  int num_classes_;
  std::vector<index_t> counts_;  // [target * C + pred]
};

/// One-shot mIoU; errors if no pixel is valid.
MiouResult miou(const LabelMap& pred, const LabelMap& target, int num_classes,
                int ignore_index = 255);

/// Per-pixel argmax over the channel axis of [N,C,H,W] logits.
/// Ties resolve to the lowest class index.
LabelMap argmax_labels(const Tensor& logits);

}  // namespace dcss

#endif  // DCSS_METRICS_HPP_
