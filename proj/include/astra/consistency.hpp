/* Copyright 2026 The Astra Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "astra/common.hpp"
#include "astra/log_sum_exp.hpp"
#include "astra/matrix.hpp"
#include "astra/rnnt_lattice.hpp"

// Alignment-marginalized consistency between a speech embedding sequence and
// a text embedding sequence, computed on the transducer lattice.
//
// Each frame-token pair gets a pointwise distance w[t][u] between speech row
// t and text row u. A particular alignment pays the sum of w over its emit
// edges; blank edges are exempt. Marginalizing over alignments gives two
// quantities:
//
//   l_c_exact  = E[ sum of w along the path ] under the posterior over
//                alignments — computed in one pass with a first-order
//                expectation semiring;
//   l_hat_norm = log E[ exp(sum of w) ] = log_zw - log_z, where log_zw is
//                the forward value of the lattice with every emit edge
//                reweighted to emit_lp + w. By Jensen's inequality,
//                l_hat_norm >= l_c_exact, with equality when the path sum is
//                constant over alignments.
//
// l_hat_norm is the trainable surrogate: its gradients with respect to w and
// to the grid entries are plain differences of posterior edge marginals.

namespace astra {

enum class PointwiseLossKind { kMae, kMse };

struct EmbeddingSequence {
  Matrix vectors;  // length x dim

  EmbeddingSequence() = default;
  explicit EmbeddingSequence(Matrix m) : vectors(std::move(m)) {
    if (vectors.rows() > 0 && vectors.cols() == 0) {
      throw UsageError("EmbeddingSequence: dim must be >= 1");
    }
    if (!all_finite(vectors)) {
      throw UsageError("EmbeddingSequence: entries must be finite");
    }
  }

  std::size_t length() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
};

struct WeightGrid {
  Matrix w;  // T x U, w[t][u] = pointwise loss between frame t and token u

  std::size_t frames() const { return w.rows(); }
  std::size_t labels() const { return w.cols(); }
};

struct ConsistencyResult {
  double log_z = kNegInf;       // log p(Y|X)
  double log_zw = kNegInf;      // log sum_a p(a) exp(L_a)
  double l_hat_norm = 0.0;      // log_zw - log_z
  double l_hat_literal = 0.0;   // log_zw / p(Y|X), reported as-is
  double l_c_exact = 0.0;       // posterior expectation of the path sum
  Matrix grad_w;                // T x U, d l_hat_norm / d w
  Matrix grad_blank;            // T x (U+1), d l_hat_norm / d blank_lp
  Matrix grad_emit;             // T x U, d l_hat_norm / d emit_lp
  Matrix weighted_emit_marginals;  // emit marginals of the reweighted lattice
};

// Mean pointwise distance between embedding rows, over the embedding
// dimension. The mean (not the sum) keeps weights comparable across dims.
inline WeightGrid build_weight_grid(const EmbeddingSequence& speech,
                                    const EmbeddingSequence& text,
                                    PointwiseLossKind kind) {
  const std::size_t T = speech.length();
  const std::size_t U = text.length();
  if (T == 0) throw UsageError("build_weight_grid: speech must be non-empty");
  if (U > 0 && speech.dim() != text.dim()) {
    throw UsageError(detail::str_cat("build_weight_grid: speech dim ",
                                     speech.dim(), " != text dim ",
                                     text.dim()));
  }
  const std::size_t D = speech.dim();
  Matrix w(T, U);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < U; ++u) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = speech.vectors(t, d) - text.vectors(u, d);
        acc += kind == PointwiseLossKind::kMae ? std::abs(diff) : diff * diff;
      }
      w(t, u) = acc / static_cast<double>(D);
    }
  }
  return WeightGrid{std::move(w)};
}

namespace detail {

inline void check_weight_shape(const LogProbGrid& grid,
                               const WeightGrid& weights) {
  if (weights.w.rows() != grid.num_frames() ||
      weights.w.cols() != grid.num_labels()) {
    throw UsageError(detail::str_cat(
        "weight grid is ", weights.w.rows(), "x", weights.w.cols(),
        " but lattice needs ", grid.num_frames(), "x", grid.num_labels()));
  }
}

// Emit edges reweighted by e^w: in the log domain, emit_lp + w.
inline Matrix reweighted_emit(const Matrix& emit_lp, const Matrix& w) {
  Matrix out = emit_lp;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += w.data()[i];
  return out;
}

}  // namespace detail

// Forward value of the lattice whose emit edges carry emit_lp + w; blank
// edges are untouched.
inline double weighted_forward(const LogProbGrid& grid,
                               const WeightGrid& weights) {
  detail::check_weight_shape(grid, weights);
  Matrix emit_w = detail::reweighted_emit(grid.emit_lp, weights.w);
  Matrix alpha = detail::forward_alpha(grid.blank_lp, emit_w);
  return alpha(grid.num_frames(), grid.num_labels());
}

// All consistency quantities in one call. l_c_exact comes from a first-order
// expectation semiring sweep: every DP cell carries the pair
// (log mass, expected accumulated w given that mass). Combining two incoming
// branches logsumexps the mass slot and takes the mass-weighted average of
// the expectation slot; extending along an edge adds the edge log-prob and,
// on emit edges, adds w to the expectation. Storing the expectation divided
// by the cell's own mass is the rescaling that keeps the linear slot from
// overflowing however large the accumulated weights grow.
inline ConsistencyResult consistency_losses(const LogProbGrid& grid,
                                            const WeightGrid& weights) {
  detail::check_weight_shape(grid, weights);
  const std::size_t T = grid.num_frames();
  const std::size_t U = grid.num_labels();
  const Matrix& B = grid.blank_lp;
  const Matrix& E = grid.emit_lp;
  const Matrix& W = weights.w;

  LatticeResult plain = rnnt_backward(grid);
  LogProbGrid wgrid(B, detail::reweighted_emit(E, W));
  LatticeResult weighted = rnnt_backward(wgrid);

  // Expectation-semiring sweep over the unweighted lattice.
  struct Cell {
    double lp = kNegInf;
    double mean = 0.0;
  };
  std::vector<Cell> cells((T + 1) * (U + 1));
  auto at = [&](std::size_t t, std::size_t u) -> Cell& {
    return cells[t * (U + 1) + u];
  };
  at(0, 0) = {0.0, 0.0};
  for (std::size_t t = 0; t <= T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double lp_b = kNegInf, mean_b = 0.0;
      double lp_e = kNegInf, mean_e = 0.0;
      if (t > 0) {
        lp_b = at(t - 1, u).lp + B(t - 1, u);
        mean_b = at(t - 1, u).mean;
      }
      if (u > 0 && t < T) {
        lp_e = at(t, u - 1).lp + E(t, u - 1);
        mean_e = at(t, u - 1).mean + W(t, u - 1);
      }
      const double lp = log_add(lp_b, lp_e);
      double mean = 0.0;
      if (lp != kNegInf) {
        const double wb = lp_b == kNegInf ? 0.0 : std::exp(lp_b - lp);
        const double we = lp_e == kNegInf ? 0.0 : std::exp(lp_e - lp);
        mean = wb * mean_b + we * mean_e;
      }
      at(t, u) = {lp, mean};
    }
  }

  ConsistencyResult res;
  res.log_z = plain.value;
  res.log_zw = weighted.value;
  res.l_hat_norm = res.log_zw - res.log_z;
  res.l_hat_literal = res.log_zw * std::exp(-res.log_z);
  res.l_c_exact = at(T, U).mean;
  res.weighted_emit_marginals = weighted.emit_marginals;
  res.grad_w = weighted.emit_marginals;
  res.grad_blank = weighted.blank_marginals;
  res.grad_emit = weighted.emit_marginals;
  for (std::size_t i = 0; i < res.grad_blank.size(); ++i) {
    res.grad_blank.data()[i] -= plain.blank_marginals.data()[i];
  }
  for (std::size_t i = 0; i < res.grad_emit.size(); ++i) {
    res.grad_emit.data()[i] -= plain.emit_marginals.data()[i];
  }
  return res;
}

struct EmbeddingGrads {
  Matrix speech;  // T x dim
  Matrix text;    // U x dim
};

// Chain rule from d l_hat_norm / d w through the pointwise loss to the two
// embedding sequences. MAE uses the subgradient sign(diff)/D with
// sign(0) = 0; MSE uses 2 diff / D.
inline EmbeddingGrads consistency_embedding_grads(
    const ConsistencyResult& result, const EmbeddingSequence& speech,
    const EmbeddingSequence& text, PointwiseLossKind kind) {
  const std::size_t T = speech.length();
  const std::size_t U = text.length();
  const std::size_t D = speech.dim();
  if (result.grad_w.rows() != T || result.grad_w.cols() != U) {
    throw UsageError("consistency_embedding_grads: grad_w shape mismatch");
  }
  if (U > 0 && speech.dim() != text.dim()) {
    throw UsageError("consistency_embedding_grads: embedding dims differ");
  }
  EmbeddingGrads g{Matrix(T, D), Matrix(U, D)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < U; ++u) {
      const double gw = result.grad_w(t, u);
      if (gw == 0.0) continue;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = speech.vectors(t, d) - text.vectors(u, d);
        double d_speech;
        if (kind == PointwiseLossKind::kMae) {
          d_speech = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        } else {
          d_speech = 2.0 * diff;
        }
        d_speech /= static_cast<double>(D);
        g.speech(t, d) += gw * d_speech;
        g.text(u, d) -= gw * d_speech;
      }
    }
  }
  return g;
}

}  // namespace astra
