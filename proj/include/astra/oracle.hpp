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
#include <vector>

#include "astra/common.hpp"
#include "astra/consistency.hpp"
#include "astra/ctc_lattice.hpp"
#include "astra/log_sum_exp.hpp"
#include "astra/rnnt_lattice.hpp"

// Brute-force ground truth: every objective computed by explicitly listing
// alignment paths and summing. Deliberately simple and slow; the dynamic
// programs are checked against this, never the other way around. All sums
// are taken by one logsumexp over the fully collected per-path list, so the
// numbers agree with hand arithmetic as closely as doubles allow.

namespace astra {

inline constexpr std::uint64_t kMaxOraclePaths = 1000000;

struct AlignmentPath {
  enum class EdgeKind { kBlank, kEmit };
  struct Edge {
    EdgeKind kind;
    std::size_t t;
    std::size_t u;
  };
  std::vector<Edge> edges;
  double log_prob = 0.0;
  double l_ca = 0.0;  // sum of w over the emit edges
};

// Every monotone path from (0,0) to (T,U), emit edges only at t < T.
// Skeletons only: log_prob and l_ca are left at zero.
inline std::vector<AlignmentPath> enumerate_rnnt_paths(std::size_t T,
                                                       std::size_t U) {
  const std::uint64_t total = path_count(T, U);
  if (total > kMaxOraclePaths) {
    throw UsageError(detail::str_cat("enumerate_rnnt_paths: ", total,
                                     " paths exceed the cap of ",
                                     kMaxOraclePaths));
  }
  std::vector<AlignmentPath> out;
  out.reserve(total);
  AlignmentPath cur;
  auto rec = [&](auto&& self, std::size_t t, std::size_t u) -> void {
    if (t == T && u == U) {
      out.push_back(cur);
      return;
    }
    if (u < U && t < T) {
      cur.edges.push_back({AlignmentPath::EdgeKind::kEmit, t, u});
      self(self, t, u + 1);
      cur.edges.pop_back();
    }
    if (t < T) {
      cur.edges.push_back({AlignmentPath::EdgeKind::kBlank, t, u});
      self(self, t + 1, u);
      cur.edges.pop_back();
    }
  };
  rec(rec, 0, 0);
  return out;
}

namespace detail {

inline void score_path(AlignmentPath& path, const LogProbGrid& grid,
                       const Matrix* w) {
  path.log_prob = 0.0;
  path.l_ca = 0.0;
  for (const auto& e : path.edges) {
    if (e.kind == AlignmentPath::EdgeKind::kBlank) {
      path.log_prob += grid.blank_lp(e.t, e.u);
    } else {
      path.log_prob += grid.emit_lp(e.t, e.u);
      if (w != nullptr) path.l_ca += (*w)(e.t, e.u);
    }
  }
}

}  // namespace detail

struct OracleLosses {
  double log_z;
  double log_zw;
  double l_c_exact;
  double l_hat_norm;
};

inline OracleLosses oracle_losses(const LogProbGrid& grid,
                                  const WeightGrid& weights) {
  detail::check_weight_shape(grid, weights);
  auto paths = enumerate_rnnt_paths(grid.num_frames(), grid.num_labels());
  std::vector<double> lps, lpws;
  lps.reserve(paths.size());
  lpws.reserve(paths.size());
  for (auto& p : paths) {
    detail::score_path(p, grid, &weights.w);
    lps.push_back(p.log_prob);
    lpws.push_back(p.log_prob + p.l_ca);
  }
  OracleLosses o;
  o.log_z = log_sum_exp(lps);
  if (o.log_z == kNegInf) {
    throw DegenerateInputError("oracle_losses: zero-probability lattice");
  }
  o.log_zw = log_sum_exp(lpws);
  o.l_c_exact = 0.0;
  for (const auto& p : paths) {
    o.l_c_exact += std::exp(p.log_prob - o.log_z) * p.l_ca;
  }
  o.l_hat_norm = o.log_zw - o.log_z;
  return o;
}

// Unweighted full-sum value by enumeration; tolerates zero-probability
// lattices (returns -inf), which makes it usable for masking checks.
inline double oracle_rnnt_forward(const LogProbGrid& grid) {
  auto paths = enumerate_rnnt_paths(grid.num_frames(), grid.num_labels());
  std::vector<double> lps;
  lps.reserve(paths.size());
  for (auto& p : paths) {
    detail::score_path(p, grid, nullptr);
    lps.push_back(p.log_prob);
  }
  return log_sum_exp(lps);
}

namespace detail {

// All valid CTC state sequences of length T over S expanded states, given
// the skip mask. Counts first so it can refuse before allocating.
inline std::vector<std::vector<int>> enumerate_ctc_state_seqs(
    std::size_t T, std::size_t S, const std::vector<std::uint8_t>& mask) {
  // Path count DP, saturating at the cap.
  std::vector<std::uint64_t> count(S, 0);
  count[0] = 1;
  if (S > 1) count[1] = 1;
  auto saturating_add = [](std::uint64_t a, std::uint64_t b) {
    const std::uint64_t cap = kMaxOraclePaths + 1;
    return a + b > cap ? cap : a + b;
  };
  for (std::size_t t = 1; t < T; ++t) {
    std::vector<std::uint64_t> next(S, 0);
    for (std::size_t s = 0; s < S; ++s) {
      if (count[s] == 0) continue;
      next[s] = saturating_add(next[s], count[s]);
      if (s + 1 < S) next[s + 1] = saturating_add(next[s + 1], count[s]);
      if (s + 2 < S && !mask[s + 2]) {
        next[s + 2] = saturating_add(next[s + 2], count[s]);
      }
    }
    count = std::move(next);
  }
  std::uint64_t total = count[S - 1];
  if (S > 1) total = saturating_add(total, count[S - 2]);
  if (total > kMaxOraclePaths) {
    throw UsageError("enumerate_ctc_state_seqs: path cap exceeded");
  }

  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, std::size_t t, std::size_t s) -> void {
    cur.push_back(static_cast<int>(s));
    if (t == T - 1) {
      if (s == S - 1 || (S > 1 && s == S - 2)) out.push_back(cur);
    } else {
      self(self, t + 1, s);
      if (s + 1 < S) self(self, t + 1, s + 1);
      if (s + 2 < S && !mask[s + 2]) self(self, t + 1, s + 2);
    }
    cur.pop_back();
  };
  rec(rec, 0, 0);
  if (S > 1) rec(rec, 0, 1);
  return out;
}

}  // namespace detail

// All frame-to-expanded-state assignments that collapse to the label
// sequence. T too short simply yields an empty set.
inline std::vector<std::vector<int>> enumerate_ctc_paths(
    std::size_t T, const std::vector<int>& labels) {
  if (T == 0) throw UsageError("enumerate_ctc_paths: T must be >= 1");
  return detail::enumerate_ctc_state_seqs(T, 2 * labels.size() + 1,
                                          ctc_skip_mask(labels));
}

namespace detail {

inline double oracle_ctc_value(const CtcGrid& grid, const WeightGrid* weights) {
  auto seqs = enumerate_ctc_state_seqs(grid.num_frames(), grid.num_states(),
                                       grid.same_label_mask);
  if (seqs.empty()) return kNegInf;
  std::vector<double> lps;
  lps.reserve(seqs.size());
  for (const auto& seq : seqs) {
    double lp = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const int s = seq[t];
      lp += grid.log_probs(t, s);
      if (weights != nullptr && s % 2 == 1) {
        lp += weights->w(t, (s - 1) / 2);
      }
    }
    lps.push_back(lp);
  }
  return log_sum_exp(lps);
}

}  // namespace detail

inline double oracle_ctc_forward(const CtcGrid& grid) {
  return detail::oracle_ctc_value(grid, nullptr);
}

inline double oracle_ctc_weighted_forward(const CtcGrid& grid,
                                          const WeightGrid& weights) {
  return detail::oracle_ctc_value(grid, &weights);
}

}  // namespace astra
