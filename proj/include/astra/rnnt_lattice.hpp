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

#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "astra/common.hpp"
#include "astra/log_sum_exp.hpp"
#include "astra/matrix.hpp"

// Transducer alignment lattice over nodes (t, u) with t in 0..T and u in
// 0..U. A horizontal edge (t,u) -> (t+1,u) consumes one frame and carries
// blank_lp[t][u]; a vertical edge (t,u) -> (t,u+1) emits label u+1 and
// carries emit_lp[t][u]. Vertical edges exist only for t < T, so the final
// edge into (T,U) is always a blank: the terminal-blank convention is
// structural rather than a special final factor. An alignment is any
// monotone path from (0,0) to (T,U); it has exactly T blank edges and U
// emit edges, and there are C(T-1+U, U) of them.

namespace astra {

struct LogProbGrid {
  Matrix blank_lp;  // T x (U+1)
  Matrix emit_lp;   // T x U

  LogProbGrid(Matrix blank, Matrix emit)
      : blank_lp(std::move(blank)), emit_lp(std::move(emit)) {
    const std::size_t T = blank_lp.rows();
    if (T == 0) throw UsageError("LogProbGrid: frame count T must be >= 1");
    if (emit_lp.rows() != T) {
      throw UsageError(detail::str_cat("LogProbGrid: blank_lp has ", T,
                                       " rows but emit_lp has ",
                                       emit_lp.rows()));
    }
    if (blank_lp.cols() != emit_lp.cols() + 1) {
      throw UsageError(detail::str_cat(
          "LogProbGrid: blank_lp must be T x (U+1) and emit_lp T x U; got ",
          blank_lp.cols(), " and ", emit_lp.cols(), " columns"));
    }
    if (!finite_or_neg_inf(blank_lp) || !finite_or_neg_inf(emit_lp)) {
      throw UsageError("LogProbGrid: entries must be finite or -inf");
    }
  }

  std::size_t num_frames() const { return blank_lp.rows(); }  // T
  std::size_t num_labels() const { return emit_lp.cols(); }   // U
};

struct LatticeResult {
  double value = kNegInf;  // log p(Y|X)
  Matrix grad_blank;       // T x (U+1), d value / d blank_lp
  Matrix grad_emit;        // T x U, d value / d emit_lp
  Matrix emit_marginals;   // T x U posterior use of each vertical edge
  Matrix blank_marginals;  // T x (U+1) posterior use of each horizontal edge
};

namespace detail {

// alpha(t,u) = log total probability of all partial paths (0,0) -> (t,u).
inline Matrix forward_alpha(const Matrix& blank_lp, const Matrix& emit_lp) {
  const std::size_t T = blank_lp.rows();
  const std::size_t U = emit_lp.cols();
  Matrix alpha(T + 1, U + 1, kNegInf);
  alpha(0, 0) = 0.0;
  for (std::size_t t = 0; t <= T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double from_blank =
          t > 0 ? alpha(t - 1, u) + blank_lp(t - 1, u) : kNegInf;
      double from_emit =
          (u > 0 && t < T) ? alpha(t, u - 1) + emit_lp(t, u - 1) : kNegInf;
      alpha(t, u) = log_add(from_blank, from_emit);
    }
  }
  return alpha;
}

// beta(t,u) = log total probability of all suffix paths (t,u) -> (T,U).
inline Matrix backward_beta(const Matrix& blank_lp, const Matrix& emit_lp) {
  const std::size_t T = blank_lp.rows();
  const std::size_t U = emit_lp.cols();
  Matrix beta(T + 1, U + 1, kNegInf);
  beta(T, U) = 0.0;
  for (std::size_t t = T + 1; t-- > 0;) {
    for (std::size_t u = U + 1; u-- > 0;) {
      if (t == T && u == U) continue;
      double via_blank = t < T ? blank_lp(t, u) + beta(t + 1, u) : kNegInf;
      double via_emit =
          (u < U && t < T) ? emit_lp(t, u) + beta(t, u + 1) : kNegInf;
      beta(t, u) = log_add(via_blank, via_emit);
    }
  }
  return beta;
}

inline double clamp_probability(double p) { return std::min(p, 1.0); }

}  // namespace detail

// log p(Y|X): the full sum over all alignments.
inline double rnnt_forward(const LogProbGrid& grid) {
  Matrix alpha = detail::forward_alpha(grid.blank_lp, grid.emit_lp);
  return alpha(grid.num_frames(), grid.num_labels());
}

// Full-sum value, posterior edge marginals, and the gradient of the value
// with respect to every log-probability entry. The gradient of the log
// forward value with respect to an edge's log weight is exactly the
// posterior probability that the alignment uses that edge, so grad_* and
// *_marginals hold the same numbers.
inline LatticeResult rnnt_backward(const LogProbGrid& grid) {
  const std::size_t T = grid.num_frames();
  const std::size_t U = grid.num_labels();
  const Matrix& B = grid.blank_lp;
  const Matrix& E = grid.emit_lp;

  Matrix alpha = detail::forward_alpha(B, E);
  const double value = alpha(T, U);
  if (value == kNegInf) {
    throw DegenerateInputError(
        "rnnt_backward: lattice assigns zero total probability");
  }
  Matrix beta = detail::backward_beta(B, E);

  LatticeResult res;
  res.value = value;
  res.blank_marginals = Matrix(T, U + 1);
  res.emit_marginals = Matrix(T, U);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      res.blank_marginals(t, u) = detail::clamp_probability(
          std::exp(alpha(t, u) + B(t, u) + beta(t + 1, u) - value));
    }
    for (std::size_t u = 0; u < U; ++u) {
      res.emit_marginals(t, u) = detail::clamp_probability(
          std::exp(alpha(t, u) + E(t, u) + beta(t, u + 1) - value));
    }
  }
  res.grad_blank = res.blank_marginals;
  res.grad_emit = res.emit_marginals;
  return res;
}

// Collapse per-node vocabulary logits onto the two scores the lattice needs:
// the blank log-probability and the correct-label log-probability, both
// taken from a log-softmax over the vocabulary at each node.
inline LogProbGrid reduce_logits(const std::vector<Matrix>& logits,
                                 const std::vector<int>& labels,
                                 int blank_id) {
  const std::size_t T = logits.size();
  if (T == 0) throw UsageError("reduce_logits: need at least one frame");
  const std::size_t rows = logits[0].rows();
  const std::size_t V = logits[0].cols();
  if (rows == 0 || V == 0) {
    throw UsageError("reduce_logits: per-frame logits must be non-empty");
  }
  const std::size_t U = rows - 1;
  if (labels.size() != U) {
    throw UsageError(detail::str_cat("reduce_logits: ", labels.size(),
                                     " labels but logits have ", rows,
                                     " label rows"));
  }
  if (blank_id < 0 || static_cast<std::size_t>(blank_id) >= V) {
    throw UsageError("reduce_logits: blank_id out of range");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= V) {
      throw UsageError(detail::str_cat("reduce_logits: label ", label,
                                       " out of range for vocab of ", V));
    }
    if (label == blank_id) {
      throw UsageError("reduce_logits: labels must not equal blank_id");
    }
  }

  Matrix blank_lp(T, U + 1);
  Matrix emit_lp(T, U);
  for (std::size_t t = 0; t < T; ++t) {
    if (logits[t].rows() != rows || logits[t].cols() != V) {
      throw UsageError("reduce_logits: inconsistent logit shapes");
    }
    for (std::size_t u = 0; u <= U; ++u) {
      const auto row = logits[t].row(u);
      const double norm = log_sum_exp(row);
      blank_lp(t, u) = row[static_cast<std::size_t>(blank_id)] - norm;
      if (u < U) {
        emit_lp(t, u) = row[static_cast<std::size_t>(labels[u])] - norm;
      }
    }
  }
  return LogProbGrid(std::move(blank_lp), std::move(emit_lp));
}

// Number of alignments: C(T-1+U, U).
inline std::uint64_t path_count(std::size_t T, std::size_t U) {
  if (T == 0) throw UsageError("path_count: T must be >= 1");
  std::uint64_t c = 1;
  for (std::size_t i = 1; i <= U; ++i) {
    const std::uint64_t num = static_cast<std::uint64_t>(T) - 1 + i;
    if (c > std::numeric_limits<std::uint64_t>::max() / num) {
      throw UsageError("path_count: result overflows 64 bits");
    }
    c = c * num / i;
  }
  return c;
}

}  // namespace astra
