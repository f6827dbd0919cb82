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
#ifndef DCSS_RNG_HPP_
#define DCSS_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace dcss {

// Hand-rolled generators instead of <random>: the standard distributions are
// implementation-defined, and run artifacts must hash identically across
// toolchains. Everything here is pure integer/f64 arithmetic (no libm).

std::uint64_t splitmix64(std::uint64_t& state);

/// Order-insensitive it is not: mixes the values in sequence. Used to derive
/// independent seeds for sub-streams ("branch 17 of node s2_l5", ...).
std::uint64_t hash_seed(std::initializer_list<std::uint64_t> parts);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Approximately standard normal (Irwin-Hall sum of 12 uniforms).
  /// Bounded in [-6, 6]; plenty for weight init and texture noise, and keeps
  /// generation libm-free.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace dcss

#endif  // DCSS_RNG_HPP_
