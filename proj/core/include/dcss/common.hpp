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
#ifndef DCSS_COMMON_HPP_
#define DCSS_COMMON_HPP_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dcss {

using index_t = std::int64_t;

/// Base error type. Subtypes map onto the CLI exit-code contract:
/// ConfigError -> 2, NumericError -> 3, IoError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

namespace detail {

inline void cat_into(std::ostringstream&) {}

template <class T, class... Rest>
void cat_into(std::ostringstream& os, T&& v, Rest&&... rest) {
  os << std::forward<T>(v);
  cat_into(os, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <class... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  detail::cat_into(os, std::forward<Args>(args)...);
  return os.str();
}

/// Number of worker threads primitive kernels may use. Results are
/// bit-identical for any value; this is a throughput knob only.
int compute_threads();
void set_compute_threads(int n);

}  // namespace dcss

#define DCSS_CHECK(cond, ...)                      \
  do {                                             \
    if (!(cond)) {                                 \
      throw ::dcss::Error(::dcss::cat(__VA_ARGS__)); \
    }                                              \
  } while (0)

#endif  // DCSS_COMMON_HPP_
