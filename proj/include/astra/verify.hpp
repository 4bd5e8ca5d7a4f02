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
#include <cmath>
#include <cstdint>
#include <vector>

#include "astra/common.hpp"
#include "astra/consistency.hpp"
#include "astra/ctc_lattice.hpp"
#include "astra/oracle.hpp"
#include "astra/rng.hpp"
#include "astra/rnnt_lattice.hpp"
#include "astra/toy_train.hpp"

// Self-check drivers: lattice-vs-oracle equivalence over random instances,
// and central finite-difference verification of every analytic gradient.
// Both are deterministic given their seed and are reused by the CLI and the
// acceptance suite.

namespace astra {

// Random lattice built the way real models produce one: random per-node
// logits pushed through reduce_logits.
inline LogProbGrid random_grid(Rng& rng, std::size_t T, std::size_t U,
                               std::size_t vocab = 5, double logit_scale = 1.5) {
  std::vector<Matrix> logits(T, Matrix(U + 1, vocab));
  for (auto& m : logits) {
    for (double& v : m.data()) v = rng.gaussian() * logit_scale;
  }
  std::vector<int> labels(U);
  for (auto& l : labels) l = 1 + static_cast<int>(rng.uniform_int(vocab - 1));
  return reduce_logits(logits, labels, /*blank_id=*/0);
}

inline WeightGrid random_weights(Rng& rng, std::size_t T, std::size_t U,
                                 double max_weight = 1.5) {
  Matrix w(T, U);
  for (double& v : w.data()) v = rng.uniform(0.0, max_weight);
  return WeightGrid{std::move(w)};
}

// Random embedding pair; when min_gap > 0, resamples until every coordinate
// difference is at least min_gap away from zero (keeps MAE finite-difference
// checks away from the kink).
inline std::pair<EmbeddingSequence, EmbeddingSequence> random_embeddings(
    Rng& rng, std::size_t T, std::size_t U, std::size_t dim,
    double min_gap = 0.0) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix s(T, dim), x(U, dim);
    for (double& v : s.data()) v = rng.gaussian();
    for (double& v : x.data()) v = rng.gaussian();
    if (min_gap > 0.0) {
      bool ok = true;
      for (std::size_t t = 0; t < T && ok; ++t) {
        for (std::size_t u = 0; u < U && ok; ++u) {
          for (std::size_t d = 0; d < dim; ++d) {
            if (std::abs(s(t, d) - x(u, d)) < min_gap) {
              ok = false;
              break;
            }
          }
        }
      }
      if (!ok) continue;
    }
    return {EmbeddingSequence(std::move(s)), EmbeddingSequence(std::move(x))};
  }
  throw UsageError("random_embeddings: could not satisfy the kink gap");
}

// Random CTC instance guaranteed to admit at least one path: frames are
// topped up to the label count plus one per adjacent repeat.
inline std::pair<CtcGrid, WeightGrid> random_ctc_instance(Rng& rng,
                                                          std::size_t max_t,
                                                          std::size_t max_u,
                                                          int vocab = 3) {
  const std::size_t U = rng.uniform_int(max_u + 1);
  std::vector<int> labels(U);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_int(vocab));
  std::size_t min_t = U;
  for (std::size_t u = 1; u < U; ++u) {
    if (labels[u] == labels[u - 1]) ++min_t;
  }
  min_t = std::max<std::size_t>(min_t, 1);
  std::size_t T = 1 + rng.uniform_int(max_t);
  T = std::max(T, min_t);

  const std::size_t S = 2 * U + 1;
  Matrix lp(T, S);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) lp(t, s) = rng.gaussian() * 1.5;
    const double norm = log_sum_exp(lp.row(t));
    for (std::size_t s = 0; s < S; ++s) lp(t, s) -= norm;
  }
  WeightGrid w = random_weights(rng, T, U);
  return {make_ctc_grid(std::move(lp), labels), std::move(w)};
}

struct OracleCheckConfig {
  std::size_t max_t = 5;
  std::size_t max_u = 4;
  std::size_t trials = 200;
  std::uint64_t seed = 7;
};

struct OracleCheckReport {
  std::size_t rnnt_trials = 0;
  std::size_t ctc_trials = 0;
  double max_abs_rnnt = 0.0;  // over log_z, log_zw, l_c_exact, l_hat_norm
  double max_abs_ctc = 0.0;   // over plain and weighted forward values

  double max_abs() const { return std::max(max_abs_rnnt, max_abs_ctc); }
  bool ok(double tol = 1e-9) const { return max_abs() < tol; }
};

inline OracleCheckReport run_oracle_check(const OracleCheckConfig& cfg) {
  if (cfg.max_t == 0) throw UsageError("oracle check: max_t must be >= 1");
  OracleCheckReport report;
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    const std::size_t T = 1 + rng.uniform_int(cfg.max_t);
    const std::size_t U = rng.uniform_int(cfg.max_u + 1);
    LogProbGrid grid = random_grid(rng, T, U);
    WeightGrid w = random_weights(rng, T, U);

    ConsistencyResult got = consistency_losses(grid, w);
    OracleLosses want = oracle_losses(grid, w);
    const double d = std::max(
        {std::abs(got.log_z - want.log_z), std::abs(got.log_zw - want.log_zw),
         std::abs(got.l_c_exact - want.l_c_exact),
         std::abs(got.l_hat_norm - want.l_hat_norm)});
    report.max_abs_rnnt = std::max(report.max_abs_rnnt, d);
    ++report.rnnt_trials;
  }
  const std::size_t ctc_trials = std::max<std::size_t>(cfg.trials / 2, 1);
  for (std::size_t i = 0; i < ctc_trials; ++i) {
    auto [grid, w] = random_ctc_instance(rng, cfg.max_t, cfg.max_u);
    const double d =
        std::max(std::abs(ctc_forward(grid) - oracle_ctc_forward(grid)),
                 std::abs(ctc_weighted_forward(grid, w) -
                          oracle_ctc_weighted_forward(grid, w)));
    report.max_abs_ctc = std::max(report.max_abs_ctc, d);
    ++report.ctc_trials;
  }
  return report;
}

// Relative error with the denominator floored at 1e-3 so near-zero gradients
// are compared on an absolute scale instead of dividing by noise.
inline double gradcheck_rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-3});
  return std::abs(got - want) / denom;
}

struct GradCheckConfig {
  std::size_t trials = 50;
  std::uint64_t seed = 11;
  double fd_step = 1e-5;
};

struct GradCheckReport {
  double max_rel_lattice = 0.0;      // rnnt_backward grads
  double max_rel_consistency = 0.0;  // grad_w / grad_emit / grad_blank
  double max_rel_embedding = 0.0;    // speech/text embedding grads
  double max_rel_toy = 0.0;          // full toy-model chain

  double max_rel() const {
    return std::max({max_rel_lattice, max_rel_consistency, max_rel_embedding,
                     max_rel_toy});
  }
  bool ok() const {
    return max_rel_lattice < 1e-6 && max_rel_consistency < 1e-5 &&
           max_rel_embedding < 1e-5 && max_rel_toy < 1e-4;
  }
};

namespace detail {

template <typename F>
double central_diff(double& x, double h, F&& f) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

}  // namespace detail

inline GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  GradCheckReport report;
  Rng rng(cfg.seed);
  const double h = cfg.fd_step;

  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::size_t T = 2 + rng.uniform_int(3);  // 2..4
    const std::size_t U = 1 + rng.uniform_int(3);  // 1..3
    LogProbGrid grid = random_grid(rng, T, U);
    WeightGrid w = random_weights(rng, T, U);

    // Plain lattice gradients against finite differences of the forward.
    {
      LatticeResult res = rnnt_backward(grid);
      auto fwd = [&] { return rnnt_forward(grid); };
      for (std::size_t i = 0; i < grid.blank_lp.size(); ++i) {
        const double fd = detail::central_diff(grid.blank_lp.data()[i], h, fwd);
        report.max_rel_lattice =
            std::max(report.max_rel_lattice,
                     gradcheck_rel_err(res.grad_blank.data()[i], fd));
      }
      for (std::size_t i = 0; i < grid.emit_lp.size(); ++i) {
        const double fd = detail::central_diff(grid.emit_lp.data()[i], h, fwd);
        report.max_rel_lattice =
            std::max(report.max_rel_lattice,
                     gradcheck_rel_err(res.grad_emit.data()[i], fd));
      }
    }

    // Surrogate gradients with respect to the weights and the grid.
    {
      ConsistencyResult res = consistency_losses(grid, w);
      auto lhat = [&] { return consistency_losses(grid, w).l_hat_norm; };
      for (std::size_t i = 0; i < w.w.size(); ++i) {
        const double fd = detail::central_diff(w.w.data()[i], h, lhat);
        report.max_rel_consistency =
            std::max(report.max_rel_consistency,
                     gradcheck_rel_err(res.grad_w.data()[i], fd));
      }
      for (std::size_t i = 0; i < grid.blank_lp.size(); ++i) {
        const double fd = detail::central_diff(grid.blank_lp.data()[i], h, lhat);
        report.max_rel_consistency =
            std::max(report.max_rel_consistency,
                     gradcheck_rel_err(res.grad_blank.data()[i], fd));
      }
      for (std::size_t i = 0; i < grid.emit_lp.size(); ++i) {
        const double fd = detail::central_diff(grid.emit_lp.data()[i], h, lhat);
        report.max_rel_consistency =
            std::max(report.max_rel_consistency,
                     gradcheck_rel_err(res.grad_emit.data()[i], fd));
      }
    }

    // Embedding gradients, chained through the pointwise loss. MAE is only
    // checked on instances sampled away from the |.| kink.
    for (PointwiseLossKind kind :
         {PointwiseLossKind::kMse, PointwiseLossKind::kMae}) {
      const double gap = kind == PointwiseLossKind::kMae ? 1e-3 : 0.0;
      auto [speech, text] = random_embeddings(rng, T, U, /*dim=*/3, gap);
      auto lhat = [&] {
        WeightGrid wg = build_weight_grid(speech, text, kind);
        return consistency_losses(grid, wg).l_hat_norm;
      };
      WeightGrid wg = build_weight_grid(speech, text, kind);
      ConsistencyResult res = consistency_losses(grid, wg);
      EmbeddingGrads eg = consistency_embedding_grads(res, speech, text, kind);
      for (std::size_t i = 0; i < speech.vectors.size(); ++i) {
        const double fd =
            detail::central_diff(speech.vectors.data()[i], h, lhat);
        report.max_rel_embedding =
            std::max(report.max_rel_embedding,
                     gradcheck_rel_err(eg.speech.data()[i], fd));
      }
      for (std::size_t i = 0; i < text.vectors.size(); ++i) {
        const double fd = detail::central_diff(text.vectors.data()[i], h, lhat);
        report.max_rel_embedding =
            std::max(report.max_rel_embedding,
                     gradcheck_rel_err(eg.text.data()[i], fd));
      }
    }

    // Full toy chain: 5 sampled coordinates per parameter block.
    {
      const std::size_t vocab = 5, D = 4, F = 4;
      ToyModelParams params = init_toy_params(vocab, D, F, rng);
      ToyExample ex;
      const std::size_t toy_u = 2 + rng.uniform_int(2);
      ex.labels.resize(toy_u);
      for (auto& l : ex.labels) l = static_cast<int>(rng.uniform_int(vocab));
      const std::size_t toy_t = toy_u + 1 + rng.uniform_int(3);
      ex.frames = Matrix(toy_t, F);
      for (double& v : ex.frames.data()) v = rng.gaussian();

      TrainConfig tc;
      tc.lambda_consistency = 0.1;
      tc.enable_text_branch = true;
      tc.pointwise = trial % 2 == 0 ? PointwiseLossKind::kMse
                                    : PointwiseLossKind::kMae;
      std::vector<std::uint8_t> mask(toy_u);
      for (auto& b : mask) b = rng.uniform() < tc.text_mask_prob ? 1 : 0;

      ToyGrads grads(params);
      toy_loss_and_grads(params, ex, tc, mask, grads);
      auto loss = [&] { return toy_total_loss(params, ex, tc, mask); };
      std::pair<Matrix*, Matrix*> blocks[] = {
          {&params.speech_proj, &grads.speech_proj},
          {&params.speech_bias, &grads.speech_bias},
          {&params.text_table, &grads.text_table},
          {&params.pred_table, &grads.pred_table},
          {&params.joiner_out, &grads.joiner_out},
          {&params.joiner_bias, &grads.joiner_bias},
      };
      for (auto& [param, grad] : blocks) {
        for (int k = 0; k < 5; ++k) {
          const std::size_t i = rng.uniform_int(param->size());
          const double fd = detail::central_diff(param->data()[i], h, loss);
          report.max_rel_toy = std::max(
              report.max_rel_toy, gradcheck_rel_err(grad->data()[i], fd));
        }
      }
    }
  }
  return report;
}

}  // namespace astra
