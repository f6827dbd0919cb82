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
#include "dcss/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace dcss {

namespace {

// Compact SHA-256 (FIPS 180-4), enough for manifests and provenance hashes.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
          0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    len_ = 0;
    buf_used_ = 0;
  }

  void update(const unsigned char* p, std::size_t n) {
    len_ += n;
    while (n > 0) {
      std::size_t take = std::min<std::size_t>(64 - buf_used_, n);
      std::memcpy(buf_.data() + buf_used_, p, take);
      buf_used_ += take;
      p += take;
      n -= take;
      if (buf_used_ == 64) {
        process(buf_.data());
        buf_used_ = 0;
      }
    }
  }

  std::string hex_digest() {
    std::uint64_t bitlen = len_ * 8;
    unsigned char pad = 0x80;
    update(&pad, 1);
    unsigned char zero = 0;
    while (buf_used_ != 56) update(&zero, 1);
    unsigned char lenbuf[8];
    for (int i = 0; i < 8; ++i) {
      lenbuf[i] = static_cast<unsigned char>(bitlen >> (56 - 8 * i));
    }
    update(lenbuf, 8);
    static const char* kHex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint32_t w : h_) {
      for (int i = 28; i >= 0; i -= 4) out.push_back(kHex[(w >> i) & 0xf]);
    }
    return out;
  }

 private:
  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void process(const unsigned char* p) {
    static const std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b,
        0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01,
        0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7,
        0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc,
        0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152,
        0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
        0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08,
        0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f,
        0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i) {
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    }
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4],
                  f = h_[5], g = h_[6], h = h_[7];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
      std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = s0 + maj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h_[0] += a; h_[1] += b; h_[2] += c; h_[3] += d;
    h_[4] += e; h_[5] += f; h_[6] += g; h_[7] += h;
  }

  std::array<std::uint32_t, 8> h_;
  std::array<unsigned char, 64> buf_;
  std::uint64_t len_ = 0;
  std::size_t buf_used_ = 0;
};

}  // namespace

void write_checkpoint(const std::string& path, const nlohmann::json& index,
                      const NamedTensorList& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  DCSS_CHECK(os.good(), "checkpoint: cannot open '", path, "' for writing");
  os << index.dump() << "\n";
  for (const auto& nt : tensors) {
    nlohmann::json header = {{"name", nt.name},
                             {"shape", nt.tensor.shape()},
                             {"dtype", "f64"}};
    os << header.dump() << "\n";
    const auto& d = nt.tensor.data();
    os.write(reinterpret_cast<const char*>(d.data()),
             static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  os.flush();
  DCSS_CHECK(os.good(), "checkpoint: write to '", path, "' failed");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  DCSS_CHECK(is.good(), "checkpoint: cannot open '", path, "'");
  Checkpoint ckpt;
  std::string line;
  DCSS_CHECK(static_cast<bool>(std::getline(is, line)),
             "checkpoint: '", path, "' is empty");
  ckpt.index = nlohmann::json::parse(line, nullptr, false);
  DCSS_CHECK(!ckpt.index.is_discarded(), "checkpoint: malformed index in '",
             path, "'");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    DCSS_CHECK(!header.is_discarded(), "checkpoint: malformed tensor header");
    std::string name = header.at("name").get<std::string>();
    std::vector<index_t> shape = header.at("shape").get<std::vector<index_t>>();
    index_t n = 1;
    for (index_t d : shape) n *= d;
    std::vector<double> values(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    DCSS_CHECK(is.gcount() ==
                   static_cast<std::streamsize>(values.size() * sizeof(double)),
               "checkpoint: truncated payload for tensor '", name, "'");
    ckpt.order.push_back(name);
    ckpt.tensors.emplace(name, Tensor::from(shape, std::move(values)));
  }
  return ckpt;
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  DCSS_CHECK(is.good(), "sha256: cannot open '", path, "'");
  Sha256 h;
  std::array<unsigned char, 1 << 16> buf;
  while (is) {
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  return h.hex_digest();
}

std::string sha256_bytes(const std::string& bytes) {
  Sha256 h;
  h.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  return h.hex_digest();
}

}  // namespace dcss
