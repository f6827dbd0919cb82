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
#ifndef DCSS_DATA_HPP_
#define DCSS_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcss/rng.hpp"
#include "dcss/tensor.hpp"

namespace dcss {

inline constexpr int kIgnoreIndex = 255;

/// One segmentation sample: image [3,H,W] in [0,1], labels [H,W] in
/// [0,num_classes) or kIgnoreIndex.
struct SegSample {
  Tensor image;
  LabelMap label;
};

/// Synthetic dataset layout. Regeneration is a pure function of (spec, seed):
/// sample i of a split depends only on the seed, the split id and i.
struct DatasetSpec {
  int num_classes = 5;
  index_t height = 64;
  index_t width = 64;
  index_t count_train_a = 200;
  index_t count_train_b = 100;
  index_t count_val = 50;
  std::uint64_t seed = 20260101;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct Dataset {
  DatasetSpec spec;
  std::vector<SegSample> train_a;
  std::vector<SegSample> train_b;
  std::vector<SegSample> val;
};

/// Layered random shapes (rectangles, disks, stripes) over a textured
/// background; the label of a pixel is the class of the topmost shape.
/// Shape colors track their class with noise on top. Uses no libm, so the
/// serialized bytes hash identically across platforms.
SegSample make_sample(const DatasetSpec& spec, int split_id, index_t index);

Dataset generate_dataset(const DatasetSpec& spec);

/// Fractional split of a flat sample list into trainA/trainB/val.
/// Defaults mirror the 2000/975/500 protocol proportions.
struct SplitSpec {
  double frac_train_a = 2000.0 / 3475.0;
  double frac_train_b = 975.0 / 3475.0;
  double frac_val = 500.0 / 3475.0;
};

struct SplitIndices {
  std::vector<index_t> train_a, train_b, val;
};

SplitIndices split_dataset(index_t count, const SplitSpec& split,
                           std::uint64_t seed);

struct AugmentConfig {
  double scale_min = 0.5;
  double scale_max = 2.0;
  index_t crop_h = 64;
  index_t crop_w = 64;
  double flip_prob = 0.5;
};

/// Random scale (bilinear image / nearest labels), pad-to-crop with zeros and
/// the ignore label, random crop, random horizontal flip.
SegSample augment(const SegSample& sample, const AugmentConfig& cfg, Rng& rng);

/// Non-taped bilinear resize of a [C,H,W] tensor, align-corners=false.
Tensor resize_bilinear(const Tensor& chw, index_t out_h, index_t out_w);
LabelMap resize_nearest(const LabelMap& label, index_t out_h, index_t out_w);

// Split persistence: header JSON line {"spec","split","count"} followed by
// packed samples (image f64 bytes, then label int32 bytes).
void write_split(const std::string& path, const DatasetSpec& spec,
                 const std::string& split_name,
                 const std::vector<SegSample>& samples);
std::vector<SegSample> read_split(const std::string& path, DatasetSpec* spec_out);
Dataset read_dataset_dir(const std::string& dir);

}  // namespace dcss

#endif  // DCSS_DATA_HPP_
