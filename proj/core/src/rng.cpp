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
#include "dcss/rng.hpp"

#include <atomic>
#include <thread>

#include "dcss/common.hpp"

namespace dcss {

namespace {
std::atomic<int> g_compute_threads{0};  // 0 = auto

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace

int compute_threads() {
  int n = g_compute_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_compute_threads(int n) {
  g_compute_threads.store(n > 0 ? n : 0, std::memory_order_relaxed);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t hash_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t state = 0x6a09e667f3bcc908ull;
  std::uint64_t acc = 0;
  for (std::uint64_t p : parts) {
    state ^= p;
    acc = splitmix64(state) ^ rotl(acc, 23);
  }
  return acc;
}

Rng::Rng(std::uint64_t seed) {
  // xoshiro256** seeded via splitmix64, as recommended by its authors.
  for (auto& w : s_) w = splitmix64(seed);
  // Avoid the all-zero state (cannot happen via splitmix64, but cheap to assert).
  DCSS_CHECK(s_[0] | s_[1] | s_[2] | s_[3], "rng: degenerate seed state");
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  DCSS_CHECK(n > 0, "rng: below(0)");
  // Rejection-free modulo is fine here; n is tiny relative to 2^64.
  return next_u64() % n;
}

double Rng::normal() {
  double acc = 0.0;
  for (int i = 0; i < 12; ++i) acc += uniform();
  return acc - 6.0;
}

}  // namespace dcss
