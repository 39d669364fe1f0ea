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

#ifndef FEDGREC_CHECKPOINT_HPP_
#define FEDGREC_CHECKPOINT_HPP_

// Binary model checkpoint. All integers and IEEE-754 doubles little-endian,
// doubles copied bit for bit:
//
//   offset  field
//   0       magic "FGRCKPT1" (8 bytes)
//   8       u32 dim d, u32 depth K
//   16      u64 num_users M, u64 num_items N, u64 epoch
//   40      u8 scheme (0 weighted_mean, 1 last_pair, 2 concat)
//   41      weighted_mean only: (K+1) f64 weights
//   ...     item layers: (K+1) blocks of N x d f64, layer-major, row-major
//   ...     user layers: (K+1) blocks of M x d f64, same layout
//   ...     M u64 optimizer step counts, then M x d f64 first moments,
//           then M x d f64 second moments
//   end-32  SHA-256 of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "fedgrec/digest.hpp"
#include "fedgrec/embedding.hpp"
#include "fedgrec/errors.hpp"

namespace fedgrec {

static_assert(std::endian::native == std::endian::little);

inline constexpr char kCheckpointMagic[8] = {'F', 'G', 'R', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  std::uint32_t dim = 0;
  std::uint32_t depth = 0;
  std::uint64_t num_users = 0;
  std::uint64_t num_items = 0;
  std::uint64_t epoch = 0;
  AggregationScheme scheme;
  std::vector<double> item_layers;
  std::vector<double> user_layers;
  std::vector<std::uint64_t> adam_steps;
  std::vector<double> adam_first;
  std::vector<double> adam_second;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_all(std::span<const T> vs) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(vs.data());
    bytes_.insert(bytes_.end(), p, p + vs.size_bytes());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  template <typename T>
  std::vector<T> get_all(std::size_t count) {
    if (count > remaining() / sizeof(T)) throw IoError("checkpoint truncated");
    std::vector<T> out(count);
    take(out.data(), count * sizeof(T));
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void take(void* dst, std::size_t n) {
    if (n > remaining()) throw IoError("checkpoint truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  const std::size_t layers = std::size_t{c.depth} + 1;
  if (c.item_layers.size() != layers * c.num_items * c.dim ||
      c.user_layers.size() != layers * c.num_users * c.dim ||
      c.adam_steps.size() != c.num_users || c.adam_first.size() != c.num_users * c.dim ||
      c.adam_second.size() != c.num_users * c.dim) {
    throw DimensionError("checkpoint: array sizes inconsistent with header");
  }
  c.scheme.check_compatible(c.depth);
  detail::ByteWriter w;
  w.put_all(std::span<const char>(kCheckpointMagic, 8));
  w.put(c.dim);
  w.put(c.depth);
  w.put(c.num_users);
  w.put(c.num_items);
  w.put(c.epoch);
  w.put(static_cast<std::uint8_t>(c.scheme.kind()));
  if (c.scheme.kind() == AggregationScheme::Kind::kWeightedMean) {
    w.put_all(std::span<const double>(c.scheme.weights()));
  }
  w.put_all(std::span<const double>(c.item_layers));
  w.put_all(std::span<const double>(c.user_layers));
  w.put_all(std::span<const std::uint64_t>(c.adam_steps));
  w.put_all(std::span<const double>(c.adam_first));
  w.put_all(std::span<const double>(c.adam_second));
  const Digest d = sha256(w.bytes());
  w.put_all(std::span<const std::uint8_t>(d));
  return std::move(w.bytes());
}

inline Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 + 32 + 33) throw IoError("checkpoint too short");
  const auto body = bytes.first(bytes.size() - 32);
  const Digest expect = sha256(body);
  if (!std::equal(expect.begin(), expect.end(), bytes.end() - 32)) {
    throw IoError("checkpoint checksum mismatch (corrupted file)");
  }
  detail::ByteReader r(body);
  const auto magic = r.get_all<char>(8);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
    throw IoError("not a checkpoint file (bad magic)");
  }
  Checkpoint c;
  c.dim = r.get<std::uint32_t>();
  c.depth = r.get<std::uint32_t>();
  c.num_users = r.get<std::uint64_t>();
  c.num_items = r.get<std::uint64_t>();
  c.epoch = r.get<std::uint64_t>();
  const std::size_t layers = std::size_t{c.depth} + 1;
  switch (r.get<std::uint8_t>()) {
    case 0:
      c.scheme = AggregationScheme::weighted_mean(r.get_all<double>(layers));
      break;
    case 1:
      c.scheme = AggregationScheme::last_pair();
      break;
    case 2:
      c.scheme = AggregationScheme::concat();
      break;
    default:
      throw IoError("checkpoint: unknown aggregation scheme");
  }
  c.item_layers = r.get_all<double>(layers * c.num_items * c.dim);
  c.user_layers = r.get_all<double>(layers * c.num_users * c.dim);
  c.adam_steps = r.get_all<std::uint64_t>(c.num_users);
  c.adam_first = r.get_all<double>(c.num_users * c.dim);
  c.adam_second = r.get_all<double>(c.num_users * c.dim);
  if (r.remaining() != 0) throw IoError("checkpoint has trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace fedgrec

#endif  // FEDGREC_CHECKPOINT_HPP_
