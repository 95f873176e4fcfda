// SPDX-License-Identifier: Apache-2.0
//
// Generation modes of a trained Wyner model. Every output is a decoder mean;
// decoder noise is never added. Noise blocks are standard normals with one row
// per output (style extraction uses a single row).
#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "wyner/estimators.hpp"
#include "wyner/losses.hpp"
#include "wyner/models.hpp"
#include "wyner/rng.hpp"

namespace wyner {

struct SamplePairs {
  Tensor x;  // [n, x_dim]
  Tensor y;  // [n, y_dim]
};

/// Extracted style: a local code (u0 for side X, v0 for side Y) and the common
/// code sampled alongside it.
struct StyleCode {
  std::optional<Tensor> z0;  // [1, z_dim]
  Tensor local;              // [1, u_dim] or [1, v_dim]
  Side side = Side::kY;
  std::string source;
};

/// Reference data for style extraction and reconstruction; either side may be
/// absent. Rows are [1, dim].
struct Reference {
  std::optional<Tensor> x;
  std::optional<Tensor> y;
};

/// z, u, v from the priors; both decoders.
SamplePairs sample_joint(const Model& model, std::size_t n, const LatentNoise& noise);

/// n outputs of the other side given one conditioning row: z ~ q(z|input),
/// local code from its prior. Reads noise.z and noise.v (x -> y) or noise.u.
Tensor sample_conditional(const Model& model, const Tensor& input, Direction direction,
                          std::size_t n, const LatentNoise& noise);

/// Samples (z0, local0). With both sides present z0 ~ q(z|x0,y0); with only
/// `side` present z0 ~ q(z|side0), which needs that marginal encoder. The
/// local code is then drawn from the side's local encoder given (z0, side0).
StyleCode extract_style(const Model& model, const Reference& reference, Side side,
                        const LatentNoise& noise);

/// One output with a fresh z ~ q(z|input) and the style's local code.
Tensor sample_conditional_styled(const Model& model, const Tensor& input, Direction direction,
                                 const StyleCode& style, const LatentNoise& noise);

/// n pairs with fresh z ~ p(z) and fixed u = style_x.local, v = style_y.local.
SamplePairs sample_joint_styled(const Model& model, const StyleCode& style_x,
                                const StyleCode& style_y, std::size_t n,
                                const LatentNoise& noise);

enum class ReconInference { kPair, kX, kY };

/// n pairs with z ~ q(z|reference) drawn per output and u, v from the priors.
SamplePairs joint_stochastic_reconstruction(const Model& model, const Reference& reference,
                                            std::size_t n, ReconInference inference,
                                            const LatentNoise& noise);

/// Header `task,label_ref,x1..,y1..`.
void write_samples_header(std::ostream& out, std::size_t x_dim, std::size_t y_dim);
/// One line per row; a missing side leaves its fields empty.
void write_samples(std::ostream& out, std::string_view task, int label_ref, const Tensor* x,
                   const Tensor* y, std::size_t x_dim, std::size_t y_dim);

}  // namespace wyner
