// SPDX-License-Identifier: Apache-2.0
#include "wyner/mog.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

namespace wyner {

PairSample PairSet::at(std::size_t i) const {
  PairSample s;
  for (std::size_t j = 0; j < kMogDim; ++j) {
    s.x[j] = x.at(i, j);
    s.y[j] = y.at(i, j);
  }
  s.label = labels.at(i);
  return s;
}

PairSet PairSet::gather(std::span<const std::size_t> idx) const {
  const std::size_t xd = x.cols();
  const std::size_t yd = y.cols();
  PairSet out{Tensor({idx.size(), xd}), Tensor({idx.size(), yd}), {}};
  out.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t src = idx[r];
    std::copy_n(x.raw() + src * xd, xd, out.x.raw() + r * xd);
    std::copy_n(y.raw() + src * yd, yd, out.y.raw() + r * yd);
    out.labels.push_back(labels.at(src));
  }
  return out;
}

PairSet PairSet::from_samples(std::span<const PairSample> samples) {
  PairSet out{Tensor({samples.size(), kMogDim}), Tensor({samples.size(), kMogDim}), {}};
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (std::size_t j = 0; j < kMogDim; ++j) {
      out.x.at(r, j) = samples[r].x[j];
      out.y.at(r, j) = samples[r].y[j];
    }
    out.labels.push_back(samples[r].label);
  }
  return out;
}

std::pair<double, double> mu(int label) {
  switch (label) {
    case 1: return {0.0, 0.0};
    case 2: return {4.0, 4.0};
    case 3: return {-4.0, 4.0};
    case 4: return {-4.0, -4.0};
    case 5: return {4.0, -4.0};
    default:
      throw LabelOutOfRange("label " + std::to_string(label) + " is outside 1..5");
  }
}

namespace {

// Noise snapped to multiples of 2^-44 so that m + u and m - u are exact for
// |m + u| < 2^9; the two halves then sum to exactly 4 m. The snap moves a
// draw by at most 2^-45.
double snap(double u) { return std::ldexp(std::nearbyint(std::ldexp(u, 44)), -44); }

}  // namespace

PairSample make_pair(int label, std::span<const double> u, std::span<const double> v) {
  if (u.size() != kMogHalf || v.size() != kMogHalf) {
    throw DimensionMismatch("make_pair: local noise must have 5 coordinates");
  }
  const auto [m1, m2] = mu(label);
  PairSample s;
  s.label = label;
  for (std::size_t j = 0; j < kMogHalf; ++j) {
    const double uj = snap(u[j]);
    const double vj = snap(v[j]);
    s.x[j] = 2.0 * (m1 + uj);
    s.x[j + kMogHalf] = 2.0 * (m1 - uj);
    s.y[j] = 2.0 * (m2 + vj);
    s.y[j + kMogHalf] = 2.0 * (m2 - vj);
  }
  return s;
}

PairSet sample_pairs(std::size_t n, const Rng& rng) {
  Rng labels = rng.split("labels");
  const Rng u_root = rng.split("U");
  const Rng v_root = rng.split("V");
  std::vector<PairSample> samples;
  samples.reserve(n);
  std::array<double, kMogHalf> u{};
  std::array<double, kMogHalf> v{};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = 1 + static_cast<int>(labels.uniform_int(kMogLabels));
    Rng ui = u_root.split(static_cast<std::uint64_t>(i));
    Rng vi = v_root.split(static_cast<std::uint64_t>(i));
    for (std::size_t j = 0; j < kMogHalf; ++j) {
      u[j] = ui.normal();
      v[j] = vi.normal();
    }
    samples.push_back(make_pair(label, u, v));
  }
  return PairSet::from_samples(samples);
}

PairDataset generate(const DatasetSpec& spec) {
  if (spec.n_train == 0 || spec.n_test == 0) {
    throw EmptyDataset("dataset sizes must be at least 1");
  }
  const Rng root = Rng(spec.seed).split("mog-dataset");
  return PairDataset{sample_pairs(spec.n_train, root.split("train")),
                     sample_pairs(spec.n_test, root.split("test"))};
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch_seed) {
  if (n == 0) throw EmptyDataset("cannot batch an empty dataset");
  if (batch_size == 0) throw InvalidSpec("batch size must be positive");
  Rng rng = Rng(epoch_seed).split("shuffle");
  const std::vector<std::size_t> order = permutation(n, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void write_csv(std::ostream& out, const PairSet& set) {
  out << "label";
  for (std::size_t j = 1; j <= set.x.cols(); ++j) out << ",x" << j;
  for (std::size_t j = 1; j <= set.y.cols(); ++j) out << ",y" << j;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.labels[i];
    for (std::size_t j = 0; j < set.x.cols(); ++j) out << ',' << set.x.at(i, j);
    for (std::size_t j = 0; j < set.y.cols(); ++j) out << ',' << set.y.at(i, j);
    out << '\n';
  }
}

namespace {

double block_distance2(std::span<const double> side, double m) {
  double d2 = 0.0;
  for (double value : side) d2 += (value - 2.0 * m) * (value - 2.0 * m);
  return d2;
}

}  // namespace

int nearest_label(std::span<const double> x, std::span<const double> y) {
  int best = 1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= kMogLabels; ++k) {
    const auto [m1, m2] = mu(k);
    const double d2 = block_distance2(x, m1) + block_distance2(y, m2);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return best;
}

double nearest_component_mean(std::span<const double> side) {
  double best = 0.0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (double m : {0.0, 4.0, -4.0}) {
    const double d2 = block_distance2(side, m);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = m;
    }
  }
  return best;
}

}  // namespace wyner
