/*
 * Copyright 2026 The FedGRec Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDGREC_DIGEST_HPP_
#define FEDGREC_DIGEST_HPP_

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "fedgrec/errors.hpp"

namespace fedgrec {

using Digest = std::array<std::uint8_t, 32>;

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      EVP_MD_CTX_free(ctx_);
      throw Error("sha256: digest init failed");
    }
  }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  ~Sha256() { EVP_MD_CTX_free(ctx_); }

  Sha256& update(std::span<const std::uint8_t> bytes) {
    EVP_DigestUpdate(ctx_, bytes.data(), bytes.size());
    return *this;
  }
  Sha256& update(const std::string& s) {
    EVP_DigestUpdate(ctx_, s.data(), s.size());
    return *this;
  }
  Sha256& update_u64(std::uint64_t v) {
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return update(std::span<const std::uint8_t>(le, 8));
  }

  Digest finish() {
    Digest out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, out.data(), &len);
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline Digest sha256(std::span<const std::uint8_t> bytes) {
  return Sha256().update(bytes).finish();
}

inline std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

}  // namespace fedgrec

#endif  // FEDGREC_DIGEST_HPP_
