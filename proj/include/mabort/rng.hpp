// Copyright 2024 The mabort Authors.
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

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mabort {

/// splitmix64 finalizer, used to derive independent child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: the same (seed, a, b, c) always yields the
/// same child seed regardless of call order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ (b + 0x3c6ef372fe94f82bULL));
  s = splitmix64(s ^ (c + 0xa54ff53a5f1d36f1ULL));
  return s;
}

/// Caller-owned random stream.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on the open interval (0,1).
  double uniform() {
    for (;;) {
      double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mabort
