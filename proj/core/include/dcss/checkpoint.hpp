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
#ifndef DCSS_CHECKPOINT_HPP_
#define DCSS_CHECKPOINT_HPP_

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcss/tensor.hpp"

namespace dcss {

/// A parameter with a stable name (and whether weight decay applies to it).
struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool weight_decay = false;
};

using NamedTensorList = std::vector<NamedTensor>;

/// Checkpoint file layout: one JSON index line, then one record per tensor.
/// Each record is a JSON header line {"name","shape","dtype":"f64"} followed
/// by the raw little-endian f64 payload (row-major).
void write_checkpoint(const std::string& path, const nlohmann::json& index,
                      const NamedTensorList& tensors);

struct Checkpoint {
  nlohmann::json index;
  std::vector<std::string> order;  // tensor names in file order
  std::map<std::string, Tensor> tensors;
};

Checkpoint read_checkpoint(const std::string& path);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);
/// Hex SHA-256 of a byte string.
std::string sha256_bytes(const std::string& bytes);

}  // namespace dcss

#endif  // DCSS_CHECKPOINT_HPP_
