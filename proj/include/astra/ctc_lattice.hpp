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

#include <cstdint>
#include <utility>
#include <vector>

#include "astra/common.hpp"
#include "astra/consistency.hpp"
#include "astra/log_sum_exp.hpp"
#include "astra/matrix.hpp"

// CTC transport of the weighted objective. States are the blank-interleaved
// expansion of the label sequence (eps, y1, eps, y2, ..., eps), 2U+1 of
// them. Paths move monotonically over frames with self-loop, advance-by-one,
// and advance-by-two transitions; the skip is forbidden into blank states
// and into a label equal to the label two positions back. Valid paths start
// in state 0 or 1 and end in the last or second-to-last state.
//
// Weighting: a frame spent in non-blank state 2u+1 multiplies in
// e^{w[t][u]}, i.e. every frame of a multi-frame emission pays the weight.
// Blank frames are exempt. Unlike the transducer lattice, a label may span
// several frames, so shifting w by a constant c shifts the weighted forward
// value by c times the posterior-expected number of non-blank frames, not by
// c * U.

namespace astra {

struct CtcGrid {
  Matrix log_probs;  // T x (2U+1), per-frame log-prob of each expanded state
  std::vector<std::uint8_t> same_label_mask;  // true forbids the skip into s

  CtcGrid(Matrix lp, std::vector<std::uint8_t> mask)
      : log_probs(std::move(lp)), same_label_mask(std::move(mask)) {
    if (log_probs.rows() == 0) {
      throw UsageError("CtcGrid: frame count T must be >= 1");
    }
    if (log_probs.cols() == 0 || log_probs.cols() % 2 == 0) {
      throw UsageError("CtcGrid: state count must be odd (2U+1)");
    }
    if (same_label_mask.size() != log_probs.cols()) {
      throw UsageError("CtcGrid: mask length must equal the state count");
    }
    if (!finite_or_neg_inf(log_probs)) {
      throw UsageError("CtcGrid: entries must be finite or -inf");
    }
  }

  std::size_t num_frames() const { return log_probs.rows(); }
  std::size_t num_states() const { return log_probs.cols(); }
  std::size_t num_labels() const { return (log_probs.cols() - 1) / 2; }
};

// Skip-transition mask for a label sequence: position s may not be entered
// by a skip when its label equals the label two positions earlier. Blank
// positions always forbid the skip (it would jump over a label).
inline std::vector<std::uint8_t> ctc_skip_mask(const std::vector<int>& labels) {
  const std::size_t S = 2 * labels.size() + 1;
  std::vector<std::uint8_t> mask(S, 0);
  for (std::size_t s = 2; s < S; ++s) {
    if (s % 2 == 1) {
      const std::size_t u = (s - 1) / 2;
      mask[s] = labels[u] == labels[u - 1] ? 1 : 0;
    } else {
      mask[s] = 1;
    }
  }
  return mask;
}

inline CtcGrid make_ctc_grid(Matrix log_probs, const std::vector<int>& labels) {
  if (log_probs.cols() != 2 * labels.size() + 1) {
    throw UsageError(detail::str_cat("make_ctc_grid: ", labels.size(),
                                     " labels need ", 2 * labels.size() + 1,
                                     " states but log_probs has ",
                                     log_probs.cols(), " columns"));
  }
  return CtcGrid(std::move(log_probs), ctc_skip_mask(labels));
}

struct CtcResult {
  double value = kNegInf;
  Matrix state_posteriors;  // T x (2U+1), rows sum to 1
};

namespace detail {

inline Matrix ctc_adjusted_lp(const CtcGrid& grid, const WeightGrid* weights) {
  Matrix lp = grid.log_probs;
  if (weights != nullptr) {
    if (weights->w.rows() != grid.num_frames() ||
        weights->w.cols() != grid.num_labels()) {
      throw UsageError(detail::str_cat(
          "ctc weights are ", weights->w.rows(), "x", weights->w.cols(),
          " but lattice needs ", grid.num_frames(), "x", grid.num_labels()));
    }
    for (std::size_t t = 0; t < grid.num_frames(); ++t) {
      for (std::size_t u = 0; u < grid.num_labels(); ++u) {
        lp(t, 2 * u + 1) += weights->w(t, u);
      }
    }
  }
  return lp;
}

inline Matrix ctc_alpha(const Matrix& lp,
                        const std::vector<std::uint8_t>& mask) {
  const std::size_t T = lp.rows();
  const std::size_t S = lp.cols();
  Matrix a(T, S, kNegInf);
  a(0, 0) = lp(0, 0);
  if (S > 1) a(0, 1) = lp(0, 1);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (s >= 2 && !mask[s]) acc = log_add(acc, a(t - 1, s - 2));
      a(t, s) = lp(t, s) + acc;
    }
  }
  return a;
}

// Suffix mass from (t, s) onward, excluding frame t's own emission.
inline Matrix ctc_beta(const Matrix& lp,
                       const std::vector<std::uint8_t>& mask) {
  const std::size_t T = lp.rows();
  const std::size_t S = lp.cols();
  Matrix b(T, S, kNegInf);
  b(T - 1, S - 1) = 0.0;
  if (S > 1) b(T - 1, S - 2) = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = lp(t + 1, s) + b(t + 1, s);
      if (s + 1 < S) acc = log_add(acc, lp(t + 1, s + 1) + b(t + 1, s + 1));
      if (s + 2 < S && !mask[s + 2]) {
        acc = log_add(acc, lp(t + 1, s + 2) + b(t + 1, s + 2));
      }
      b(t, s) = acc;
    }
  }
  return b;
}

inline double ctc_value_from_alpha(const Matrix& a) {
  const std::size_t T = a.rows();
  const std::size_t S = a.cols();
  double v = a(T - 1, S - 1);
  if (S > 1) v = log_add(v, a(T - 1, S - 2));
  return v;
}

inline CtcResult ctc_run(const CtcGrid& grid, const WeightGrid* weights,
                         bool want_posteriors) {
  Matrix lp = ctc_adjusted_lp(grid, weights);
  Matrix a = ctc_alpha(lp, grid.same_label_mask);
  CtcResult res;
  res.value = ctc_value_from_alpha(a);
  if (res.value == kNegInf) {
    throw DegenerateInputError(
        "ctc: no valid path (frame count too short for the label sequence, "
        "or all paths masked)");
  }
  if (want_posteriors) {
    Matrix b = ctc_beta(lp, grid.same_label_mask);
    const std::size_t T = grid.num_frames();
    const std::size_t S = grid.num_states();
    res.state_posteriors = Matrix(T, S);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        res.state_posteriors(t, s) =
            clamp_probability(std::exp(a(t, s) + b(t, s) - res.value));
      }
    }
  }
  return res;
}

}  // namespace detail

// Standard CTC forward value: log-probability summed over all monotone
// frame-to-state paths that collapse to the label sequence.
inline double ctc_forward(const CtcGrid& grid) {
  return detail::ctc_run(grid, nullptr, false).value;
}

// Forward value with every non-blank frame reweighted by e^{w[t][u]}.
inline double ctc_weighted_forward(const CtcGrid& grid,
                                   const WeightGrid& weights) {
  return detail::ctc_run(grid, &weights, false).value;
}

inline CtcResult ctc_posteriors(const CtcGrid& grid) {
  return detail::ctc_run(grid, nullptr, true);
}

inline CtcResult ctc_weighted_posteriors(const CtcGrid& grid,
                                         const WeightGrid& weights) {
  return detail::ctc_run(grid, &weights, true);
}

}  // namespace astra
