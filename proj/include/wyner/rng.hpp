// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams (Philox4x32-10) with named, splittable
// substreams. A stream is identified by a 64-bit key (the seed) and a 64-bit
// stream id; the n-th 128-bit block is a pure function of (key, stream, n), so
// any sample can be regenerated without replaying its predecessors.
#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "wyner/tensor.hpp"

namespace wyner {

class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : key_(seed), stream_(stream) {}

  /// Child stream for a named purpose ("labels", "init", ...).
  Rng split(std::string_view name) const;
  /// Child stream for an index (per-sample, per-epoch, per-seed streams).
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, bound) without modulo bias.
  std::uint64_t uniform_int(std::uint64_t bound);
  /// Standard normal via Box-Muller; both outputs of a block are used.
  double normal();

  /// [rows, cols] tensor of independent standard normals, row-major order.
  Tensor normal_tensor(std::size_t rows, std::size_t cols);

  std::uint64_t key() const { return key_; }
  std::uint64_t stream() const { return stream_; }

  /// The raw Philox4x32-10 block for (key, stream, counter).
  static std::array<std::uint32_t, 4> block(std::uint64_t key, std::uint64_t stream,
                                            std::uint64_t counter);

 private:
  void refill();

  std::uint64_t key_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> words_{};
  int words_left_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit FNV-1a, used to turn stream names into ids.
std::uint64_t fnv1a64(std::string_view text);

/// Fisher-Yates permutation of [0, n) drawn from `rng`.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace wyner
