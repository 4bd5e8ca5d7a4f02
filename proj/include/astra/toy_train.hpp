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
#include <ostream>
#include <utility>
#include <vector>

#include "astra/common.hpp"
#include "astra/consistency.hpp"
#include "astra/matrix.hpp"
#include "astra/rng.hpp"
#include "astra/rnnt_lattice.hpp"
#include "astra/tensor_json.hpp"

// Desk-scale trainer: a tiny transducer (affine+tanh speech encoder,
// embedding-table text encoder, one-step predictor, additive joiner) trained
// by plain gradient descent on synthetic token sequences. The paired branch
// minimizes the transducer loss plus lambda times the consistency surrogate
// between speech and text encoder outputs; an optional text branch feeds the
// (randomly row-masked) text embeddings through the shared predictor/joiner
// as a U-frame input and adds its transducer loss. All gradients are
// accumulated by hand in reverse mode, which keeps every step exactly
// reproducible from the seed.

namespace astra {

struct ToyModelParams {
  std::size_t frame_dim = 0;  // F
  std::size_t embed_dim = 0;  // D
  std::size_t vocab = 0;      // V real tokens; blank id is V

  Matrix speech_proj;  // F x D
  Matrix speech_bias;  // 1 x D
  Matrix text_table;   // V x D
  Matrix pred_table;   // (V+1) x D; row V is the start-of-sequence row
  Matrix joiner_out;   // D x (V+1)
  Matrix joiner_bias;  // 1 x (V+1)

  int blank_id() const { return static_cast<int>(vocab); }
};

inline ToyModelParams init_toy_params(std::size_t vocab, std::size_t embed_dim,
                                      std::size_t frame_dim, Rng& rng,
                                      double scale = 0.1) {
  if (vocab < 2 || embed_dim < 2) {
    throw UsageError("init_toy_params: need vocab >= 2 and embed_dim >= 2");
  }
  ToyModelParams p;
  p.frame_dim = frame_dim;
  p.embed_dim = embed_dim;
  p.vocab = vocab;
  p.speech_proj = Matrix(frame_dim, embed_dim);
  p.speech_bias = Matrix(1, embed_dim);
  p.text_table = Matrix(vocab, embed_dim);
  p.pred_table = Matrix(vocab + 1, embed_dim);
  p.joiner_out = Matrix(embed_dim, vocab + 1);
  p.joiner_bias = Matrix(1, vocab + 1);
  for (Matrix* m : {&p.speech_proj, &p.speech_bias, &p.text_table,
                    &p.pred_table, &p.joiner_out, &p.joiner_bias}) {
    for (double& v : m->data()) v = rng.gaussian() * scale;
  }
  return p;
}

struct ToyExample {
  Matrix frames;            // T x F synthetic speech
  std::vector<int> labels;  // U tokens, each in [0, vocab)
  // [start, end) frame span of each label; generation metadata only.
  std::vector<std::pair<std::size_t, std::size_t>> alignment_truth;
};

// Synthetic utterances: each token owns a fixed unit-norm prototype frame
// (drawn once per dataset); a label emits 1-3 noisy copies of its prototype,
// and 0-2 pure-noise silence frames are inserted before, between and after
// tokens. Fully determined by the generator state.
inline std::vector<ToyExample> gen_dataset(Rng& rng, std::size_t n,
                                           std::size_t vocab,
                                           std::size_t frame_dim,
                                           double noise_sigma = 0.3) {
  if (vocab < 2 || frame_dim < 2) {
    throw UsageError("gen_dataset: need vocab >= 2 and frame_dim >= 2");
  }
  std::vector<std::vector<double>> protos(vocab,
                                          std::vector<double>(frame_dim));
  for (auto& proto : protos) {
    double norm_sq = 0.0;
    for (double& v : proto) {
      v = rng.gaussian();
      norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    for (double& v : proto) v /= norm;
  }

  std::vector<ToyExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ToyExample ex;
    const std::size_t U = 2 + rng.uniform_int(5);  // 2..6
    ex.labels.resize(U);
    for (auto& l : ex.labels) l = static_cast<int>(rng.uniform_int(vocab));

    std::vector<std::vector<double>> rows;
    auto push_silence = [&] {
      const std::size_t k = rng.uniform_int(3);  // 0..2
      for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> f(frame_dim);
        for (double& v : f) v = rng.gaussian() * noise_sigma;
        rows.push_back(std::move(f));
      }
    };
    push_silence();
    for (int label : ex.labels) {
      const std::size_t start = rows.size();
      const std::size_t repeats = 1 + rng.uniform_int(3);  // 1..3
      for (std::size_t j = 0; j < repeats; ++j) {
        std::vector<double> f(frame_dim);
        for (std::size_t d = 0; d < frame_dim; ++d) {
          f[d] = protos[label][d] + rng.gaussian() * noise_sigma;
        }
        rows.push_back(std::move(f));
      }
      ex.alignment_truth.emplace_back(start, rows.size());
      push_silence();
    }

    ex.frames = Matrix(rows.size(), frame_dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t d = 0; d < frame_dim; ++d) {
        ex.frames(r, d) = rows[r][d];
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

struct TrainConfig {
  std::uint64_t seed = 13;
  std::size_t steps = 2000;
  double learning_rate = 0.05;
  double lambda_consistency = 0.1;
  double lambda_text = 0.5;
  PointwiseLossKind pointwise = PointwiseLossKind::kMae;
  double text_mask_prob = 0.15;
  bool enable_consistency = true;
  bool enable_text_branch = true;

  void validate() const {
    if (lambda_consistency < 0.0) throw UsageError("lambda must be >= 0");
    if (learning_rate <= 0.0) throw UsageError("learning rate must be > 0");
    if (text_mask_prob < 0.0 || text_mask_prob >= 1.0) {
      throw UsageError("text_mask_prob must be in [0, 1)");
    }
  }
};

namespace detail {

inline Matrix toy_speech_encode(const ToyModelParams& p, const Matrix& frames) {
  if (frames.cols() != p.frame_dim) {
    throw UsageError(detail::str_cat("speech frames have dim ", frames.cols(),
                                     ", model expects ", p.frame_dim));
  }
  const std::size_t T = frames.rows();
  Matrix enc(T, p.embed_dim);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < p.embed_dim; ++d) {
      double z = p.speech_bias(0, d);
      for (std::size_t f = 0; f < p.frame_dim; ++f) {
        z += frames(t, f) * p.speech_proj(f, d);
      }
      enc(t, d) = std::tanh(z);
    }
  }
  return enc;
}

inline Matrix toy_text_encode(const ToyModelParams& p,
                              const std::vector<int>& labels) {
  Matrix enc(labels.size(), p.embed_dim);
  for (std::size_t u = 0; u < labels.size(); ++u) {
    const int label = labels[u];
    if (label < 0 || static_cast<std::size_t>(label) >= p.vocab) {
      throw UsageError(detail::str_cat("label ", label,
                                       " out of range for vocab of ",
                                       p.vocab));
    }
    for (std::size_t d = 0; d < p.embed_dim; ++d) {
      enc(u, d) = p.text_table(label, d);
    }
  }
  return enc;
}

// Predictor/joiner evaluation for any encoder output `enc` (speech or text
// side): h(t,u) = tanh(enc[t] + g[u]), logits(t,u) = h * joiner_out + bias.
struct JointCache {
  Matrix enc;                  // T' x D
  Matrix g;                    // (U+1) x D predictor rows
  std::vector<Matrix> h;       // T' matrices of (U+1) x D
  std::vector<Matrix> logits;  // T' matrices of (U+1) x (V+1)
};

inline std::size_t pred_row_for(const ToyModelParams& p,
                                const std::vector<int>& labels,
                                std::size_t u) {
  return u == 0 ? p.vocab : static_cast<std::size_t>(labels[u - 1]);
}

inline JointCache joint_forward(const ToyModelParams& p, Matrix enc,
                                const std::vector<int>& labels) {
  const std::size_t T = enc.rows();
  const std::size_t U = labels.size();
  const std::size_t D = p.embed_dim;
  const std::size_t Vp1 = p.vocab + 1;
  JointCache c;
  c.enc = std::move(enc);
  c.g = Matrix(U + 1, D);
  for (std::size_t u = 0; u <= U; ++u) {
    const std::size_t row = pred_row_for(p, labels, u);
    for (std::size_t d = 0; d < D; ++d) c.g(u, d) = p.pred_table(row, d);
  }
  c.h.assign(T, Matrix(U + 1, D));
  c.logits.assign(T, Matrix(U + 1, Vp1));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      for (std::size_t d = 0; d < D; ++d) {
        c.h[t](u, d) = std::tanh(c.enc(t, d) + c.g(u, d));
      }
      for (std::size_t v = 0; v < Vp1; ++v) {
        double z = p.joiner_bias(0, v);
        for (std::size_t d = 0; d < D; ++d) {
          z += c.h[t](u, d) * p.joiner_out(d, v);
        }
        c.logits[t](u, v) = z;
      }
    }
  }
  return c;
}

}  // namespace detail

struct ToyGrads {
  Matrix speech_proj, speech_bias, text_table, pred_table, joiner_out,
      joiner_bias;

  explicit ToyGrads(const ToyModelParams& p)
      : speech_proj(p.frame_dim, p.embed_dim),
        speech_bias(1, p.embed_dim),
        text_table(p.vocab, p.embed_dim),
        pred_table(p.vocab + 1, p.embed_dim),
        joiner_out(p.embed_dim, p.vocab + 1),
        joiner_bias(1, p.vocab + 1) {}
};

namespace detail {

// Reverse pass from per-node grid gradients (already scaled by their loss
// weights) back through log-softmax, joiner and predictor. Accumulates the
// joiner/predictor parameter gradients and returns d loss / d enc.
inline Matrix joint_backward(const ToyModelParams& p, const JointCache& c,
                             const std::vector<int>& labels,
                             const Matrix& dgrid_blank,
                             const Matrix& dgrid_emit, ToyGrads& grads) {
  const std::size_t T = c.enc.rows();
  const std::size_t U = labels.size();
  const std::size_t D = p.embed_dim;
  const std::size_t Vp1 = p.vocab + 1;
  const std::size_t blank = p.vocab;
  Matrix denc(T, D);
  Matrix dg(U + 1, D);
  std::vector<double> sm(Vp1), dh(D);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      const auto lrow = c.logits[t].row(u);
      const double norm = log_sum_exp(lrow);
      const double gb = dgrid_blank(t, u);
      const double ge = u < U ? dgrid_emit(t, u) : 0.0;
      const double total = gb + ge;
      if (gb == 0.0 && ge == 0.0) continue;
      for (std::size_t v = 0; v < Vp1; ++v) sm[v] = std::exp(lrow[v] - norm);
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t v = 0; v < Vp1; ++v) {
        // d lsm_k / d logit_v = delta_kv - softmax_v, for k in {blank, label}
        double dlogit = -sm[v] * total;
        if (v == blank) dlogit += gb;
        if (u < U && v == static_cast<std::size_t>(labels[u])) dlogit += ge;
        grads.joiner_bias(0, v) += dlogit;
        for (std::size_t d = 0; d < D; ++d) {
          grads.joiner_out(d, v) += c.h[t](u, d) * dlogit;
          dh[d] += p.joiner_out(d, v) * dlogit;
        }
      }
      for (std::size_t d = 0; d < D; ++d) {
        const double hval = c.h[t](u, d);
        const double dz = dh[d] * (1.0 - hval * hval);
        denc(t, d) += dz;
        dg(u, d) += dz;
      }
    }
  }
  for (std::size_t u = 0; u <= U; ++u) {
    const std::size_t row = pred_row_for(p, labels, u);
    for (std::size_t d = 0; d < D; ++d) {
      grads.pred_table(row, d) += dg(u, d);
    }
  }
  return denc;
}

inline Matrix masked_rows(const Matrix& m,
                          const std::vector<std::uint8_t>& mask) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    if (mask[r]) {
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = 0.0;
    }
  }
  return out;
}

}  // namespace detail

struct ToyForward {
  std::vector<Matrix> logits;  // T matrices of (U+1) x (V+1)
  EmbeddingSequence speech;    // e_s, T x D
  EmbeddingSequence text;      // e_t, U x D
};

inline ToyForward forward_logits(const ToyModelParams& p,
                                 const ToyExample& ex) {
  Matrix e_s = detail::toy_speech_encode(p, ex.frames);
  Matrix e_t = detail::toy_text_encode(p, ex.labels);
  detail::JointCache c = detail::joint_forward(p, e_s, ex.labels);
  return ToyForward{std::move(c.logits), EmbeddingSequence(std::move(e_s)),
                    EmbeddingSequence(std::move(e_t))};
}

struct StepMetrics {
  double rnnt_loss = 0.0;
  double l_hat_norm = 0.0;
  double l_c_exact = 0.0;
  double text_loss = 0.0;
  bool skipped = false;
};

// Total objective and its gradient with respect to every parameter block.
// `text_mask` holds one flag per label row (1 = zero the row) and must have
// size U when the text branch is enabled. Returns the metrics; the combined
// objective rnnt + lambda * l_hat_norm + lambda_text * text is written to
// *total_loss_out when requested.
inline StepMetrics toy_loss_and_grads(const ToyModelParams& p,
                                      const ToyExample& ex,
                                      const TrainConfig& cfg,
                                      const std::vector<std::uint8_t>& text_mask,
                                      ToyGrads& grads,
                                      double* total_loss_out = nullptr) {
  const std::size_t U = ex.labels.size();
  const double lambda =
      cfg.enable_consistency ? cfg.lambda_consistency : 0.0;

  Matrix e_s = detail::toy_speech_encode(p, ex.frames);
  Matrix e_t = detail::toy_text_encode(p, ex.labels);
  detail::JointCache pc = detail::joint_forward(p, e_s, ex.labels);
  LogProbGrid grid = reduce_logits(pc.logits, ex.labels, p.blank_id());
  LatticeResult lattice = rnnt_backward(grid);

  EmbeddingSequence speech_seq(e_s);
  EmbeddingSequence text_seq(e_t);
  WeightGrid wg = build_weight_grid(speech_seq, text_seq, cfg.pointwise);
  ConsistencyResult cons = consistency_losses(grid, wg);

  StepMetrics m;
  m.rnnt_loss = -lattice.value;
  m.l_hat_norm = cons.l_hat_norm;
  m.l_c_exact = cons.l_c_exact;

  // Paired branch: d(rnnt + lambda * l_hat_norm) / d grid entries.
  Matrix dblank = lattice.blank_marginals;
  Matrix demit = lattice.emit_marginals;
  for (std::size_t i = 0; i < dblank.size(); ++i) {
    dblank.data()[i] = -dblank.data()[i] + lambda * cons.grad_blank.data()[i];
  }
  for (std::size_t i = 0; i < demit.size(); ++i) {
    demit.data()[i] = -demit.data()[i] + lambda * cons.grad_emit.data()[i];
  }
  Matrix denc = detail::joint_backward(p, pc, ex.labels, dblank, demit, grads);

  Matrix de_t(U, p.embed_dim);
  if (lambda > 0.0) {
    EmbeddingGrads eg =
        consistency_embedding_grads(cons, speech_seq, text_seq, cfg.pointwise);
    for (std::size_t i = 0; i < denc.size(); ++i) {
      denc.data()[i] += lambda * eg.speech.data()[i];
    }
    for (std::size_t i = 0; i < de_t.size(); ++i) {
      de_t.data()[i] = lambda * eg.text.data()[i];
    }
  }

  // Text branch: the masked text embeddings play the role of a U-frame
  // input to the shared predictor/joiner.
  if (cfg.enable_text_branch) {
    if (text_mask.size() != U) {
      throw UsageError("toy_loss_and_grads: text_mask must have one flag per label");
    }
    Matrix e_tm = detail::masked_rows(e_t, text_mask);
    detail::JointCache tc = detail::joint_forward(p, e_tm, ex.labels);
    LogProbGrid tgrid = reduce_logits(tc.logits, ex.labels, p.blank_id());
    LatticeResult tres = rnnt_backward(tgrid);
    m.text_loss = -tres.value;
    Matrix tdblank = tres.blank_marginals;
    Matrix tdemit = tres.emit_marginals;
    for (double& v : tdblank.data()) v *= -cfg.lambda_text;
    for (double& v : tdemit.data()) v *= -cfg.lambda_text;
    Matrix denc_text =
        detail::joint_backward(p, tc, ex.labels, tdblank, tdemit, grads);
    for (std::size_t u = 0; u < U; ++u) {
      if (text_mask[u]) continue;  // zeroed input, no gradient flows
      for (std::size_t d = 0; d < p.embed_dim; ++d) {
        de_t(u, d) += denc_text(u, d);
      }
    }
  }

  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t d = 0; d < p.embed_dim; ++d) {
      grads.text_table(static_cast<std::size_t>(ex.labels[u]), d) +=
          de_t(u, d);
    }
  }

  // Speech encoder: back through tanh and the affine projection.
  for (std::size_t t = 0; t < ex.frames.rows(); ++t) {
    for (std::size_t d = 0; d < p.embed_dim; ++d) {
      const double es = e_s(t, d);
      const double dpre = denc(t, d) * (1.0 - es * es);
      grads.speech_bias(0, d) += dpre;
      for (std::size_t f = 0; f < p.frame_dim; ++f) {
        grads.speech_proj(f, d) += ex.frames(t, f) * dpre;
      }
    }
  }

  if (total_loss_out != nullptr) {
    *total_loss_out = m.rnnt_loss + lambda * m.l_hat_norm +
                      (cfg.enable_text_branch ? cfg.lambda_text * m.text_loss
                                              : 0.0);
  }
  return m;
}

// Forward-only evaluation of the same combined objective; used by the
// finite-difference checks.
inline double toy_total_loss(const ToyModelParams& p, const ToyExample& ex,
                             const TrainConfig& cfg,
                             const std::vector<std::uint8_t>& text_mask) {
  const double lambda =
      cfg.enable_consistency ? cfg.lambda_consistency : 0.0;
  Matrix e_s = detail::toy_speech_encode(p, ex.frames);
  Matrix e_t = detail::toy_text_encode(p, ex.labels);
  detail::JointCache pc = detail::joint_forward(p, e_s, ex.labels);
  LogProbGrid grid = reduce_logits(pc.logits, ex.labels, p.blank_id());
  double total = -rnnt_forward(grid);
  if (lambda > 0.0) {
    WeightGrid wg = build_weight_grid(EmbeddingSequence(e_s),
                                      EmbeddingSequence(e_t), cfg.pointwise);
    total += lambda * consistency_losses(grid, wg).l_hat_norm;
  }
  if (cfg.enable_text_branch) {
    Matrix e_tm = detail::masked_rows(e_t, text_mask);
    detail::JointCache tc = detail::joint_forward(p, e_tm, ex.labels);
    LogProbGrid tgrid = reduce_logits(tc.logits, ex.labels, p.blank_id());
    total += cfg.lambda_text * -rnnt_forward(tgrid);
  }
  return total;
}

// One plain gradient-descent step on a single example. Draws the text-branch
// row mask from `rng` (when that branch is enabled), then updates the
// parameters in place. A degenerate lattice skips the example and reports it
// through the metrics.
inline StepMetrics train_step(ToyModelParams& params, const ToyExample& ex,
                              const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<std::uint8_t> mask;
  if (cfg.enable_text_branch) {
    mask.resize(ex.labels.size());
    for (auto& b : mask) b = rng.uniform() < cfg.text_mask_prob ? 1 : 0;
  }
  ToyGrads grads(params);
  StepMetrics m;
  try {
    m = toy_loss_and_grads(params, ex, cfg, mask, grads);
  } catch (const DegenerateInputError&) {
    m.skipped = true;
    return m;
  }
  const double lr = cfg.learning_rate;
  auto apply = [&](Matrix& param, const Matrix& grad) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      param.data()[i] -= lr * grad.data()[i];
    }
  };
  apply(params.speech_proj, grads.speech_proj);
  apply(params.speech_bias, grads.speech_bias);
  apply(params.text_table, grads.text_table);
  apply(params.pred_table, grads.pred_table);
  apply(params.joiner_out, grads.joiner_out);
  apply(params.joiner_bias, grads.joiner_bias);
  return m;
}

// Standard greedy transducer decoding: per frame, emit argmax tokens until
// blank wins, capped at 10 emissions per frame.
inline std::vector<int> greedy_decode(const ToyModelParams& p,
                                      const Matrix& frames) {
  constexpr std::size_t kMaxEmitsPerFrame = 10;
  const Matrix enc = detail::toy_speech_encode(p, frames);
  const std::size_t D = p.embed_dim;
  const std::size_t Vp1 = p.vocab + 1;
  std::vector<int> out;
  std::size_t pred_row = p.vocab;  // start row
  for (std::size_t t = 0; t < enc.rows(); ++t) {
    for (std::size_t emits = 0; emits < kMaxEmitsPerFrame; ++emits) {
      std::size_t best = 0;
      double best_score = kNegInf;
      for (std::size_t v = 0; v < Vp1; ++v) {
        double z = p.joiner_bias(0, v);
        for (std::size_t d = 0; d < D; ++d) {
          z += std::tanh(enc(t, d) + p.pred_table(pred_row, d)) *
               p.joiner_out(d, v);
        }
        if (z > best_score) {
          best_score = z;
          best = v;
        }
      }
      if (best == static_cast<std::size_t>(p.blank_id())) break;
      out.push_back(static_cast<int>(best));
      pred_row = best;
    }
  }
  return out;
}

inline std::size_t edit_distance(const std::vector<int>& a,
                                 const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct EvalResult {
  double token_error_rate = 0.0;
  double mean_l_c = 0.0;  // modality-gap diagnostic
};

inline EvalResult evaluate(const ToyModelParams& p,
                           const std::vector<ToyExample>& dataset,
                           PointwiseLossKind kind) {
  if (dataset.empty()) throw UsageError("evaluate: dataset must be non-empty");
  std::size_t total_edits = 0, total_ref = 0;
  double sum_lc = 0.0;
  for (const auto& ex : dataset) {
    const std::vector<int> hyp = greedy_decode(p, ex.frames);
    total_edits += edit_distance(hyp, ex.labels);
    total_ref += ex.labels.size();
    ToyForward fw = forward_logits(p, ex);
    LogProbGrid grid = reduce_logits(fw.logits, ex.labels, p.blank_id());
    WeightGrid wg = build_weight_grid(fw.speech, fw.text, kind);
    sum_lc += consistency_losses(grid, wg).l_c_exact;
  }
  EvalResult r;
  r.token_error_rate =
      static_cast<double>(total_edits) /
      static_cast<double>(std::max<std::size_t>(total_ref, 1));
  r.mean_l_c = sum_lc / static_cast<double>(dataset.size());
  return r;
}

struct ToyRunConfig {
  TrainConfig train;
  std::size_t vocab = 8;
  std::size_t embed_dim = 8;
  std::size_t frame_dim = 8;
  std::size_t train_examples = 128;
  std::size_t eval_examples = 256;
  double noise_sigma = 0.3;
};

struct ToyRunResult {
  EvalResult eval;
  std::size_t skipped = 0;
};

// Full training run from one seed: data generation, parameter init, the
// step loop (optionally streaming one JSON metrics line per step) and a
// held-out evaluation. Train and eval examples come from a single
// gen_dataset call so they share token prototypes.
inline ToyRunResult run_toy_training(const ToyRunConfig& cfg,
                                     std::ostream* metrics_out = nullptr) {
  cfg.train.validate();
  if (cfg.train_examples == 0 || cfg.eval_examples == 0) {
    throw UsageError("run_toy_training: need train and eval examples");
  }
  Rng rng(cfg.train.seed);
  std::vector<ToyExample> all =
      gen_dataset(rng, cfg.train_examples + cfg.eval_examples, cfg.vocab,
                  cfg.frame_dim, cfg.noise_sigma);
  std::vector<ToyExample> eval_set(
      std::make_move_iterator(all.begin() + cfg.train_examples),
      std::make_move_iterator(all.end()));
  all.resize(cfg.train_examples);

  ToyModelParams params =
      init_toy_params(cfg.vocab, cfg.embed_dim, cfg.frame_dim, rng);
  ToyRunResult result;
  for (std::size_t step = 0; step < cfg.train.steps; ++step) {
    const ToyExample& ex = all[step % cfg.train_examples];
    StepMetrics m = train_step(params, ex, cfg.train, rng);
    if (m.skipped) {
      ++result.skipped;
      continue;
    }
    if (metrics_out != nullptr) {
      JsonObjectWriter w;
      w.integer("step", static_cast<std::int64_t>(step));
      w.scalar("rnnt_loss", m.rnnt_loss);
      w.scalar("l_hat_norm", m.l_hat_norm);
      w.scalar("l_c_exact", m.l_c_exact);
      w.scalar("text_loss", m.text_loss);
      *metrics_out << w.str() << '\n';
    }
  }
  result.eval = evaluate(params, eval_set, cfg.train.pointwise);
  return result;
}

}  // namespace astra
