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

#include "reward_audit/rng.hpp"

namespace reward_audit {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

double Rng::normal() { return normal_(engine_); }

std::vector<double> Rng::normals(std::size_t n) {
  std::vector<double> out(n);
  for (double& x : out) x = normal_(engine_);
  return out;
}

double Rng::uniform() { return uniform_(engine_); }

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::uint64_t Rng::next_u64() { return engine_(); }

}  // namespace reward_audit
