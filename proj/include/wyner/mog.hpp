// SPDX-License-Identifier: Apache-2.0
//
// Paired mixture-of-Gaussians benchmark.
//
// A hidden label k ~ Unif{1..5} selects a mean pair mu(k) = (m1, m2); local
// noises U, V ~ N(0, I_5) are drawn independently and
//   x = 2 [m1 1_5 + U ; m1 1_5 - U],   y = 2 [m2 1_5 + V ; m2 1_5 - V].
// Hence x_j + x_{j+5} = 4 m1 exactly, and likewise for y.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "wyner/rng.hpp"
#include "wyner/tensor.hpp"

namespace wyner {

inline constexpr std::size_t kMogDim = 10;
inline constexpr std::size_t kMogHalf = 5;
inline constexpr int kMogLabels = 5;

struct PairSample {
  std::array<double, kMogDim> x{};
  std::array<double, kMogDim> y{};
  int label = 1;
};

struct DatasetSpec {
  std::size_t n_train = 50000;
  std::size_t n_test = 10000;
  std::uint64_t seed = 0;
};

/// Rows of x and y stored as [n, 10] matrices with labels alongside.
struct PairSet {
  Tensor x;
  Tensor y;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  PairSample at(std::size_t i) const;
  /// Rows `idx` gathered into a new set, in the given order.
  PairSet gather(std::span<const std::size_t> idx) const;
  static PairSet from_samples(std::span<const PairSample> samples);
};

struct PairDataset {
  PairSet train;
  PairSet test;
};

/// Mixture mean pair for label 1..5.
std::pair<double, double> mu(int label);

/// Applies the generator formula to given (label, U, V). U and V are first
/// snapped to a 2^-44 grid so the structural identity holds bit-exactly.
PairSample make_pair(int label, std::span<const double> u, std::span<const double> v);

/// Draws `n` pairs from `rng`; sample i depends only on (rng stream, i).
PairSet sample_pairs(std::size_t n, const Rng& rng);

/// Train and test sets from disjoint substreams of `spec.seed`.
PairDataset generate(const DatasetSpec& spec);

/// Minibatch index lists covering a fresh permutation of [0, n).
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch_seed);

/// CSV with header `label,x1..x10,y1..y10`.
void write_csv(std::ostream& out, const PairSet& set);

/// Label k whose centroid (2 mu1(k) 1_10, 2 mu2(k) 1_10) is nearest
/// (Euclidean) to the pair. Ties resolve to the smallest label.
int nearest_label(std::span<const double> x, std::span<const double> y);

/// Component mean m in {0, 4, -4} whose block 2 m 1_10 is nearest to a single
/// side. One side alone cannot separate labels sharing a component mean.
double nearest_component_mean(std::span<const double> side);

}  // namespace wyner
