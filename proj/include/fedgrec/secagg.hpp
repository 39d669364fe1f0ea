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

#ifndef FEDGREC_SECAGG_HPP_
#define FEDGREC_SECAGG_HPP_

// Secure aggregation by pairwise additive masks.
//
// Reals are encoded as signed fixed-point values in Z_{2^64} so that masks
// cancel exactly: participant u publishes
//
//   x~_u = x_u + sum_{v < u} PRG(r_uv) - sum_{v > u} PRG(r_uv)   (mod 2^64)
//
// and the masks vanish in sum_u x~_u. PRG(r) is the AES-256-CTR keystream
// under key r with an all-zero initial counter block, read as little-endian
// 64-bit words. Pair seeds are r_uv = SHA-256("fedgrec.pair" || round_key ||
// u || v) with u < v as little-endian u64, handed out by a trusted dealer.
//
// Masked payload layout: the word array in order, each word little-endian.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedgrec/digest.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"

namespace fedgrec::secagg {

static_assert(std::endian::native == std::endian::little,
              "fixed-point words are serialized as host words");

inline constexpr unsigned kDefaultFracBits = 24;

using ParticipantId = std::uint64_t;
using Seed = std::array<std::uint8_t, 32>;
using RoundKey = std::array<std::uint8_t, 32>;

struct FixedPointVector {
  std::vector<std::uint64_t> words;
  unsigned frac_bits = kDefaultFracBits;

  friend bool operator==(const FixedPointVector&,
                         const FixedPointVector&) = default;
};

inline double max_encodable(unsigned frac_bits) {
  return std::ldexp(1.0, 63 - static_cast<int>(frac_bits));
}

// Rounds each entry to the nearest multiple of 2^-frac_bits.
inline FixedPointVector encode(std::span<const double> x,
                               unsigned frac_bits = kDefaultFracBits) {
  if (frac_bits == 0 || frac_bits >= 63) throw RangeError("frac_bits must be in [1, 62]");
  const double limit = max_encodable(frac_bits);
  const double scale = std::ldexp(1.0, static_cast<int>(frac_bits));
  FixedPointVector out{std::vector<std::uint64_t>(x.size()), frac_bits};
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(std::fabs(x[i]) < limit)) {
      throw RangeError("encode: value " + std::to_string(x[i]) +
                       " outside fixed-point range");
    }
    const auto q = static_cast<std::int64_t>(std::llround(x[i] * scale));
    out.words[i] = static_cast<std::uint64_t>(q);
  }
  return out;
}

// Reads each word as two's complement and scales by 2^-frac_bits.
inline Vector decode(const FixedPointVector& fx) {
  const double scale = std::ldexp(1.0, -static_cast<int>(fx.frac_bits));
  Vector out(fx.words.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(static_cast<std::int64_t>(fx.words[i])) * scale;
  }
  return out;
}

// Counter-mode keystream over a 256-bit seed.
class Prg {
 public:
  explicit Prg(const Seed& seed) : ctx_(EVP_CIPHER_CTX_new()) {
    const std::uint8_t iv[16] = {};
    if (ctx_ == nullptr ||
        EVP_EncryptInit_ex(ctx_, EVP_aes_256_ctr(), nullptr, seed.data(), iv) != 1) {
      EVP_CIPHER_CTX_free(ctx_);
      throw Error("prg: cipher init failed");
    }
  }
  Prg(const Prg&) = delete;
  Prg& operator=(const Prg&) = delete;
  Prg(Prg&& other) noexcept : ctx_(std::exchange(other.ctx_, nullptr)) {}
  Prg& operator=(Prg&& other) noexcept {
    std::swap(ctx_, other.ctx_);
    return *this;
  }
  ~Prg() { EVP_CIPHER_CTX_free(ctx_); }

  // Continues the stream into `out`.
  void fill(std::span<std::uint64_t> out) {
    std::memset(out.data(), 0, out.size_bytes());
    auto* bytes = reinterpret_cast<unsigned char*>(out.data());
    std::size_t remaining = out.size_bytes();
    while (remaining > 0) {
      const int chunk = static_cast<int>(std::min<std::size_t>(remaining, 1 << 30));
      int written = 0;
      if (EVP_EncryptUpdate(ctx_, bytes, &written, bytes, chunk) != 1 ||
          written != chunk) {
        throw Error("prg: keystream generation failed");
      }
      bytes += chunk;
      remaining -= static_cast<std::size_t>(chunk);
    }
  }

 private:
  EVP_CIPHER_CTX* ctx_;
};

struct PairSeed {
  ParticipantId u = 0;  // u < v
  ParticipantId v = 0;
  Seed seed{};
};

// Stands in for pairwise key agreement: derives r_uv from a round key.
class SeedDealer {
 public:
  explicit SeedDealer(const RoundKey& key) : key_(key) {}

  PairSeed pair(ParticipantId a, ParticipantId b) const {
    if (a == b) throw ProtocolError("pair seed requested for a single participant");
    const ParticipantId u = std::min(a, b), v = std::max(a, b);
    Sha256 h;
    h.update(std::string("fedgrec.pair"));
    h.update(std::span<const std::uint8_t>(key_));
    h.update_u64(u).update_u64(v);
    return PairSeed{u, v, h.finish()};
  }

  // Every seed `self` shares with the other participants.
  std::vector<PairSeed> seeds_for(ParticipantId self,
                                  std::span<const ParticipantId> participants) const {
    std::vector<PairSeed> out;
    for (ParticipantId other : participants) {
      if (other != self) out.push_back(pair(self, other));
    }
    return out;
  }

 private:
  RoundKey key_;
};

inline RoundKey derive_round_key(std::uint64_t master_seed, std::uint64_t phase,
                                 std::uint64_t index) {
  return Sha256()
      .update(std::string("fedgrec.round"))
      .update_u64(master_seed)
      .update_u64(phase)
      .update_u64(index)
      .finish();
}

namespace detail {

inline void check_participants(std::span<const ParticipantId> participants) {
  if (participants.empty()) throw ProtocolError("empty participant set");
  for (std::size_t i = 1; i < participants.size(); ++i) {
    if (participants[i] <= participants[i - 1]) {
      throw ProtocolError("participant ids must be strictly ascending");
    }
  }
}

inline void add_stream(std::span<std::uint64_t> acc, std::span<const std::uint64_t> s) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s[i];
}
inline void sub_stream(std::span<std::uint64_t> acc, std::span<const std::uint64_t> s) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] -= s[i];
}

}  // namespace detail

// Masks one participant's encoded vector. `participants` is the ordered
// participant set of the round and must contain `self`.
inline FixedPointVector mask(const FixedPointVector& x, ParticipantId self,
                             std::span<const ParticipantId> participants,
                             std::span<const PairSeed> seeds) {
  detail::check_participants(participants);
  if (!std::binary_search(participants.begin(), participants.end(), self)) {
    throw ProtocolError("participant " + std::to_string(self) + " not in round");
  }
  FixedPointVector out = x;
  std::vector<std::uint64_t> stream(x.words.size());
  for (ParticipantId other : participants) {
    if (other == self) continue;
    const ParticipantId u = std::min(self, other), v = std::max(self, other);
    auto it = std::find_if(seeds.begin(), seeds.end(), [&](const PairSeed& s) {
      return s.u == u && s.v == v;
    });
    if (it == seeds.end()) {
      throw ProtocolError("missing pair seed (" + std::to_string(u) + ", " +
                          std::to_string(v) + ")");
    }
    Prg(it->seed).fill(stream);
    if (other < self) {
      detail::add_stream(out.words, stream);
    } else {
      detail::sub_stream(out.words, stream);
    }
  }
  return out;
}

// Masks every participant's vector, expanding each pair stream once. Output
// i equals mask(encoded[i], participants[i], participants, dealer seeds).
inline std::vector<FixedPointVector> mask_all(std::vector<FixedPointVector> encoded,
                                              std::span<const ParticipantId> participants,
                                              const SeedDealer& dealer) {
  detail::check_participants(participants);
  if (encoded.size() != participants.size()) {
    throw ProtocolError("one encoded vector per participant required");
  }
  const std::size_t n = encoded.size();
  const std::size_t len = encoded.front().words.size();
  // Word blocks outermost so the block of every vector stays in cache; each
  // pair keeps its own stream position across blocks.
  std::vector<Prg> streams;
  streams.reserve(n * (n - 1) / 2);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      streams.emplace_back(dealer.pair(participants[a], participants[b]).seed);
    }
  }
  constexpr std::size_t kChunk = 512;
  std::array<std::uint64_t, kChunk> chunk;
  for (std::size_t off = 0; off < len; off += kChunk) {
    const std::size_t m = std::min(kChunk, len - off);
    std::size_t pair = 0;
    for (std::size_t a = 0; a < n; ++a) {
      std::uint64_t* wa = encoded[a].words.data() + off;
      for (std::size_t b = a + 1; b < n; ++b) {
        std::uint64_t* wb = encoded[b].words.data() + off;
        streams[pair++].fill(std::span(chunk).first(m));
        for (std::size_t i = 0; i < m; ++i) {
          wb[i] += chunk[i];
          wa[i] -= chunk[i];
        }
      }
    }
  }
  return encoded;
}

// Word-wise sum mod 2^64; this is all the aggregator computes.
inline FixedPointVector modular_sum(std::span<const FixedPointVector> masked) {
  if (masked.empty()) throw ProtocolError("nothing to aggregate");
  FixedPointVector acc{std::vector<std::uint64_t>(masked.front().words.size(), 0),
                       masked.front().frac_bits};
  for (const auto& m : masked) {
    if (m.words.size() != acc.words.size() || m.frac_bits != acc.frac_bits) {
      throw DimensionError("masked vectors differ in shape");
    }
    detail::add_stream(acc.words, m.words);
  }
  return acc;
}

// The decoded output of secure aggregation. Only secure_sum creates one, so
// code that consumes an Aggregate cannot have seen an individual input.
class Aggregate {
 public:
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  // A contiguous block of the sum is itself a sum.
  Aggregate slice(std::size_t offset, std::size_t length) const {
    if (offset + length > values_.size()) throw DimensionError("aggregate slice out of range");
    return Aggregate(Vector(values_.begin() + static_cast<std::ptrdiff_t>(offset),
                            values_.begin() + static_cast<std::ptrdiff_t>(offset + length)));
  }

 private:
  explicit Aggregate(Vector v) : values_(std::move(v)) {}
  friend Aggregate secure_sum(std::span<const Vector>, std::span<const ParticipantId>,
                              const RoundKey&, unsigned);

  Vector values_;
};

// encode -> mask -> modular add -> decode. `participants[i]` owns
// `inputs[i]`; ids must be strictly ascending.
inline Aggregate secure_sum(std::span<const Vector> inputs,
                            std::span<const ParticipantId> participants,
                            const RoundKey& round_key,
                            unsigned frac_bits = kDefaultFracBits) {
  detail::check_participants(participants);
  if (inputs.size() != participants.size()) {
    throw ProtocolError("one input per participant required");
  }
  const std::size_t len = inputs.front().size();
  // Each participant contributes only its own max |x|; their sum bounds
  // every entry of the true total.
  const double limit = max_encodable(frac_bits);
  double bound = 0.0;
  std::vector<FixedPointVector> encoded;
  encoded.reserve(inputs.size());
  for (const auto& x : inputs) {
    if (x.size() != len) throw DimensionError("secure_sum: inputs differ in length");
    double m = 0.0;
    for (double v : x) m = std::max(m, std::fabs(v));
    bound += m;
    encoded.push_back(encode(x, frac_bits));
  }
  if (!(bound < limit)) throw RangeError("secure_sum: total may exceed fixed-point range");
  const auto masked = mask_all(std::move(encoded), participants, SeedDealer(round_key));
  return Aggregate(decode(modular_sum(masked)));
}

inline Aggregate secure_sum(std::span<const Vector> inputs, const RoundKey& round_key,
                            unsigned frac_bits = kDefaultFracBits) {
  std::vector<ParticipantId> ids(inputs.size());
  std::iota(ids.begin(), ids.end(), ParticipantId{0});
  return secure_sum(inputs, ids, round_key, frac_bits);
}

}  // namespace fedgrec::secagg

#endif  // FEDGREC_SECAGG_HPP_
