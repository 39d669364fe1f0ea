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

#ifndef FEDGREC_RNG_HPP_
#define FEDGREC_RNG_HPP_

#include <cstdint>
#include <random>

namespace fedgrec {

using Rng = std::mt19937_64;

// Named random streams. Each stream is a pure function of (master seed,
// stream, a, b), so changing one knob does not shift draws in another, and a
// run resumed at epoch e needs no generator state beyond e.
enum class Stream : std::uint32_t {
  kInit = 1,
  kUserSampling = 2,
  kItemQuery = 3,
  kBatchOrder = 4,
};

inline Rng make_stream(std::uint64_t master_seed, Stream stream,
                       std::uint64_t a = 0, std::uint64_t b = 0) {
  auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x); };
  auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
  std::seed_seq seq{lo(master_seed), hi(master_seed),
                    static_cast<std::uint32_t>(stream),
                    lo(a), hi(a), lo(b), hi(b)};
  return Rng(seq);
}

}  // namespace fedgrec

#endif  // FEDGREC_RNG_HPP_
