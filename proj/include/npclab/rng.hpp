// Copyright 2026 The npclab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NPCLAB_RNG_HPP_
#define NPCLAB_RNG_HPP_

#include <cstdint>

namespace npclab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a run seed and a role salt, so
// that every consumer of randomness draws from its own named stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

// Role salts for the seed streams of one run.
namespace seed_roles {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainBatches = 2;
inline constexpr std::uint64_t kDetectBatches = 3;
}  // namespace seed_roles

}  // namespace npclab

#endif  // NPCLAB_RNG_HPP_
