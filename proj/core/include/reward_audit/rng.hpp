// Copyright 2026 The Reward Audit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REWARD_AUDIT_RNG_HPP_
#define REWARD_AUDIT_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace reward_audit {

// The single seedable generator every stochastic routine draws from.
// Substreams are derived by hashing (seed, stream) so that independent work
// items (prompts, evaluation inputs) can be generated in any order or on any
// thread and still produce the same values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng substream(std::uint64_t seed, std::uint64_t stream);

  double normal();
  std::vector<double> normals(std::size_t n);
  double uniform();
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  std::uint64_t next_u64();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// SplitMix64 finalizer; used for seed derivation and digests.
std::uint64_t mix64(std::uint64_t x);

}  // namespace reward_audit

#endif  // REWARD_AUDIT_RNG_HPP_
