// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "wyner/rng.hpp"

using namespace wyner;

namespace {

// Known-answer vectors published with the Random123 reference code, written
// as (ctr0..ctr3, key0, key1) -> out0..out3.
std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr, std::uint32_t k0,
                                    std::uint32_t k1) {
  const std::uint64_t key = (static_cast<std::uint64_t>(k1) << 32) | k0;
  const std::uint64_t counter = (static_cast<std::uint64_t>(ctr[1]) << 32) | ctr[0];
  const std::uint64_t stream = (static_cast<std::uint64_t>(ctr[3]) << 32) | ctr[2];
  return Rng::block(key, stream, counter);
}

}  // namespace

TEST_CASE("Philox4x32-10 known answers") {
  using A = std::array<std::uint32_t, 4>;
  CHECK(philox({0, 0, 0, 0}, 0, 0) == A{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, 0xffffffff, 0xffffffff) ==
        A{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, 0xa4093822, 0x299f31d0) ==
        A{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and named splits are distinct") {
  Rng a = Rng(42).split("labels");
  Rng b = Rng(42).split("labels");
  Rng c = Rng(42).split("noise");
  Rng d = Rng(43).split("labels");
  std::uint64_t first_a = a.next_u64();
  CHECK(first_a == b.next_u64());
  CHECK(first_a != c.next_u64());
  CHECK(first_a != d.next_u64());
  CHECK(Rng(1).split(std::uint64_t{0}).stream() != Rng(1).split(std::uint64_t{1}).stream());
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("uniforms stay in the open unit interval") {
  Rng rng(9);
  double lo = 1.0;
  double hi = 0.0;
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    total += u;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(total / n - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("uniform_int is in range and roughly flat") {
  Rng rng(10);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.uniform_int(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  const double p = 1.0 / 7.0;
  for (int c : counts) CHECK(std::abs(c / double(n) - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("normals have unit moments") {
  Rng rng(11);
  const std::size_t n = 200000;
  const Tensor t = rng.normal_tensor(n, 1);
  std::vector<double> v(t.data().begin(), t.data().end());
  const auto [m, se] = wyner::testing::mean_se(v);
  CHECK(std::abs(m) < 3.0 * se);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  CHECK(std::abs(ss / (n - 1) - 1.0) < 0.02);
}

TEST_CASE("permutation is a bijection") {
  Rng rng(12);
  auto p = permutation(1000, rng);
  std::set<std::size_t> seen(p.begin(), p.end());
  CHECK(seen.size() == 1000);
  CHECK(*seen.rbegin() == 999);
  Rng again(12);
  CHECK(permutation(1000, again) == p);
}
