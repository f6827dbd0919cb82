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
#include "dcss/metrics.hpp"

namespace dcss {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  DCSS_CHECK(num_classes >= 1, "confusion: need at least one class");
}

void ConfusionMatrix::update(const LabelMap& pred, const LabelMap& target,
                             int ignore_index) {
  DCSS_CHECK(pred.n == target.n && pred.h == target.h && pred.w == target.w,
             "confusion: prediction [", pred.n, ",", pred.h, ",", pred.w,
             "] does not match target [", target.n, ",", target.h, ",",
             target.w, "]");
  for (std::size_t i = 0; i < target.v.size(); ++i) {
    const std::int32_t t = target.v[i];
    if (t == ignore_index) continue;
    const std::int32_t p = pred.v[i];
    DCSS_CHECK(t >= 0 && t < num_classes_, "confusion: target label ", t,
               " outside [0,", num_classes_, ")");
    DCSS_CHECK(p >= 0 && p < num_classes_, "confusion: predicted label ", p,
               " outside [0,", num_classes_, ")");
    ++counts_[static_cast<std::size_t>(t) * num_classes_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  DCSS_CHECK(num_classes_ == other.num_classes_,
             "confusion: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

index_t ConfusionMatrix::count(int target_class, int pred_class) const {
  return counts_[static_cast<std::size_t>(target_class) * num_classes_ +
                 pred_class];
}

index_t ConfusionMatrix::total_valid() const {
  index_t total = 0;
  for (index_t c : counts_) total += c;
  return total;
}

MiouResult ConfusionMatrix::miou() const {
  DCSS_CHECK(total_valid() > 0, "miou: no valid pixels");
  MiouResult r;
  r.per_class.assign(static_cast<std::size_t>(num_classes_), -1.0);
  double acc = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes_; ++c) {
    index_t tp = count(c, c);
    index_t fn = 0, fp = 0;
    for (int o = 0; o < num_classes_; ++o) {
      if (o == c) continue;
      fn += count(c, o);
      fp += count(o, c);
    }
    const index_t denom = tp + fp + fn;
    if (denom == 0) continue;  // absent from both pred and target
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    r.per_class[static_cast<std::size_t>(c)] = iou;
    acc += iou;
    ++present;
  }
  DCSS_CHECK(present > 0, "miou: no class present");
  r.mean = acc / present;
  return r;
}

MiouResult miou(const LabelMap& pred, const LabelMap& target, int num_classes,
                int ignore_index) {
  ConfusionMatrix cm(num_classes);
  cm.update(pred, target, ignore_index);
  return cm.miou();
}

LabelMap argmax_labels(const Tensor& logits) {
  DCSS_CHECK(logits.rank() == 4, "argmax_labels: expected NCHW, got ",
             shape_str(logits.shape()));
  const index_t N = logits.dim(0), C = logits.dim(1), H = logits.dim(2),
                W = logits.dim(3);
  LabelMap out(N, H, W);
  const auto& lv = logits.data();
  const index_t plane = H * W;
  for (index_t n = 0; n < N; ++n) {
    for (index_t px = 0; px < plane; ++px) {
      const index_t base = n * C * plane + px;
      int best = 0;
      double bv = lv[static_cast<std::size_t>(base)];
      for (index_t c = 1; c < C; ++c) {
        const double v = lv[static_cast<std::size_t>(base + c * plane)];
        if (v > bv) {
          bv = v;
          best = static_cast<int>(c);
        }
      }
      out.v[static_cast<std::size_t>(n * plane + px)] = best;
    }
  }
  return out;
}

}  // namespace dcss
