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

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"

#include "astra/toy_train.hpp"
#include "astra/verify.hpp"

namespace astra {
namespace {

TEST(GenDataset, DeterministicGivenSeed) {
  Rng a(99), b(99);
  auto da = gen_dataset(a, 5, 8, 8);
  auto db = gen_dataset(b, 5, 8, 8);
  ASSERT_EQ(da.size(), db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da[i].labels, db[i].labels);
    EXPECT_EQ(da[i].frames, db[i].frames);
    EXPECT_EQ(da[i].alignment_truth, db[i].alignment_truth);
  }
}

TEST(GenDataset, NoiselessFramesEqualPrototypes) {
  Rng rng(7);
  auto data = gen_dataset(rng, 20, 4, 6, /*noise_sigma=*/0.0);
  // With sigma 0, every frame of a token equals that token's prototype:
  // collect one representative per token and compare all occurrences.
  std::map<int, std::vector<double>> proto;
  for (const auto& ex : data) {
    for (std::size_t u = 0; u < ex.labels.size(); ++u) {
      const auto [start, end] = ex.alignment_truth[u];
      ASSERT_LT(start, end);
      for (std::size_t t = start; t < end; ++t) {
        std::vector<double> frame(ex.frames.row(t).begin(),
                                  ex.frames.row(t).end());
        auto [it, inserted] = proto.emplace(ex.labels[u], frame);
        if (!inserted) {
          EXPECT_EQ(it->second, frame);
        }
      }
    }
  }
  for (const auto& [token, p] : proto) {
    double norm_sq = 0.0;
    for (double v : p) norm_sq += v * v;
    EXPECT_NEAR(norm_sq, 1.0, 1e-12);
  }
}

TEST(GenDataset, LabelFrequencyNearUniform) {
  Rng rng(123);
  const std::size_t vocab = 8;
  auto data = gen_dataset(rng, 500, vocab, 8);
  std::vector<std::size_t> counts(vocab, 0);
  std::size_t total = 0;
  for (const auto& ex : data) {
    for (int l : ex.labels) {
      ++counts[static_cast<std::size_t>(l)];
      ++total;
    }
  }
  const double p = 1.0 / static_cast<double>(vocab);
  const double mean = static_cast<double>(total) * p;
  const double sigma = std::sqrt(static_cast<double>(total) * p * (1 - p));
  for (std::size_t k = 0; k < vocab; ++k) {
    EXPECT_NEAR(static_cast<double>(counts[k]), mean, 3.0 * sigma);
  }
}

TEST(GenDataset, ShapesAndSpans) {
  Rng rng(11);
  for (const auto& ex : gen_dataset(rng, 50, 8, 8)) {
    EXPECT_GE(ex.labels.size(), 2u);
    EXPECT_LE(ex.labels.size(), 6u);
    EXPECT_GE(ex.frames.rows(), ex.labels.size());
    EXPECT_EQ(ex.alignment_truth.size(), ex.labels.size());
  }
}

TEST(ForwardLogits, ZeroParamsGiveBiasLogits) {
  Rng rng(1);
  ToyModelParams p = init_toy_params(4, 3, 3, rng, /*scale=*/0.0);
  p.joiner_bias = Matrix::from_rows({{0.1, 0.2, 0.3, 0.4, 0.5}});
  ToyExample ex;
  ex.frames = Matrix(2, 3, 0.7);
  ex.labels = {1};
  ToyForward fw = forward_logits(p, ex);
  ASSERT_EQ(fw.logits.size(), 2u);
  ASSERT_EQ(fw.logits[0].rows(), 2u);
  ASSERT_EQ(fw.logits[0].cols(), 5u);
  for (const auto& m : fw.logits) {
    for (std::size_t u = 0; u < m.rows(); ++u) {
      for (std::size_t v = 0; v < m.cols(); ++v) {
        EXPECT_DOUBLE_EQ(m(u, v), p.joiner_bias(0, v));
      }
    }
  }
}

TEST(ForwardLogits, RejectsOutOfRangeLabel) {
  Rng rng(2);
  ToyModelParams p = init_toy_params(4, 3, 3, rng);
  ToyExample ex;
  ex.frames = Matrix(1, 3);
  ex.labels = {4};  // vocab is 4, valid ids are 0..3
  EXPECT_THROW(forward_logits(p, ex), UsageError);
}

TEST(TrainStep, LambdaZeroTextOffIsPureRnntStep) {
  Rng rng(3);
  ToyModelParams p = init_toy_params(5, 4, 4, rng);
  ToyExample ex;
  ex.labels = {1, 3};
  ex.frames = Matrix(4, 4);
  for (double& v : ex.frames.data()) v = rng.gaussian();

  TrainConfig cfg;
  cfg.lambda_consistency = 0.0;
  cfg.enable_consistency = false;
  cfg.enable_text_branch = false;
  ToyGrads grads(p);
  double total = 0.0;
  StepMetrics m = toy_loss_and_grads(p, ex, cfg, {}, grads, &total);
  EXPECT_DOUBLE_EQ(total, m.rnnt_loss);
  EXPECT_DOUBLE_EQ(m.text_loss, 0.0);

  // The consistency diagnostics are still reported, but the update is the
  // plain transducer gradient: check against finite differences of the
  // transducer loss alone.
  auto rnnt_only = [&] {
    ToyForward fw = forward_logits(p, ex);
    LogProbGrid grid = reduce_logits(fw.logits, ex.labels, p.blank_id());
    return -rnnt_forward(grid);
  };
  for (int k = 0; k < 5; ++k) {
    const std::size_t i = rng.uniform_int(p.joiner_out.size());
    const double fd = detail::central_diff(p.joiner_out.data()[i], 1e-5, rnnt_only);
    EXPECT_LT(gradcheck_rel_err(grads.joiner_out.data()[i], fd), 1e-4);
  }
}

TEST(ToyChain, GradsMatchFiniteDifferences) {
  Rng rng(5);
  for (PointwiseLossKind kind :
       {PointwiseLossKind::kMae, PointwiseLossKind::kMse}) {
    ToyModelParams p = init_toy_params(5, 4, 4, rng);
    ToyExample ex;
    ex.labels = {2, 0, 3};
    ex.frames = Matrix(5, 4);
    for (double& v : ex.frames.data()) v = rng.gaussian();

    TrainConfig cfg;
    cfg.lambda_consistency = 0.1;
    cfg.pointwise = kind;
    cfg.enable_text_branch = true;
    std::vector<std::uint8_t> mask = {0, 1, 0};

    ToyGrads grads(p);
    double total = 0.0;
    toy_loss_and_grads(p, ex, cfg, mask, grads, &total);
    EXPECT_NEAR(total, toy_total_loss(p, ex, cfg, mask), 1e-12);

    auto loss = [&] { return toy_total_loss(p, ex, cfg, mask); };
    std::pair<Matrix*, Matrix*> blocks[] = {
        {&p.speech_proj, &grads.speech_proj},
        {&p.speech_bias, &grads.speech_bias},
        {&p.text_table, &grads.text_table},
        {&p.pred_table, &grads.pred_table},
        {&p.joiner_out, &grads.joiner_out},
        {&p.joiner_bias, &grads.joiner_bias},
    };
    for (auto& [param, grad] : blocks) {
      for (int k = 0; k < 5; ++k) {
        const std::size_t i = rng.uniform_int(param->size());
        const double fd = detail::central_diff(param->data()[i], 1e-5, loss);
        EXPECT_LT(gradcheck_rel_err(grad->data()[i], fd), 1e-4);
      }
    }
  }
}

TEST(TrainStep, DeterministicGivenSeed) {
  auto run_once = [](std::uint64_t seed) {
    Rng rng(seed);
    auto data = gen_dataset(rng, 3, 6, 6);
    ToyModelParams p = init_toy_params(6, 6, 6, rng);
    TrainConfig cfg;
    StepMetrics last{};
    for (int step = 0; step < 5; ++step) {
      last = train_step(p, data[step % data.size()], cfg, rng);
    }
    return std::make_pair(last, p);
  };
  auto [m1, p1] = run_once(21);
  auto [m2, p2] = run_once(21);
  EXPECT_EQ(m1.rnnt_loss, m2.rnnt_loss);
  EXPECT_EQ(m1.l_hat_norm, m2.l_hat_norm);
  EXPECT_EQ(m1.l_c_exact, m2.l_c_exact);
  EXPECT_EQ(m1.text_loss, m2.text_loss);
  EXPECT_EQ(p1.joiner_out, p2.joiner_out);
  EXPECT_EQ(p1.text_table, p2.text_table);
}

TEST(TrainStep, Step0RnntLossSharedAcrossConfigs) {
  // Same seed, consistency on vs off: data, init and therefore the first
  // paired-branch loss are identical.
  auto first_rnnt = [](bool enable) {
    ToyRunConfig cfg;
    cfg.train.seed = 77;
    cfg.train.steps = 1;
    cfg.train.lambda_consistency = enable ? 0.1 : 0.0;
    cfg.train.enable_consistency = enable;
    cfg.train.enable_text_branch = enable;
    cfg.train_examples = 4;
    cfg.eval_examples = 2;
    std::ostringstream metrics;
    run_toy_training(cfg, &metrics);
    nlohmann::json line = nlohmann::json::parse(
        metrics.str().substr(0, metrics.str().find('\n')));
    return line.at("rnnt_loss").get<double>();
  };
  EXPECT_EQ(first_rnnt(true), first_rnnt(false));
}

TEST(GreedyDecode, BlankFavoringParamsDecodeEmpty) {
  Rng rng(8);
  ToyModelParams p = init_toy_params(4, 3, 3, rng, /*scale=*/0.0);
  p.joiner_bias(0, p.vocab) = 5.0;  // blank always wins
  EXPECT_TRUE(greedy_decode(p, Matrix(6, 3, 0.5)).empty());
}

TEST(GreedyDecode, EmissionCapBoundsOutputLength) {
  Rng rng(9);
  ToyModelParams p = init_toy_params(4, 3, 3, rng, /*scale=*/0.0);
  p.joiner_bias(0, 2) = 5.0;  // token 2 always wins, never blank
  const Matrix frames(4, 3, 0.1);
  const std::vector<int> out = greedy_decode(p, frames);
  EXPECT_EQ(out.size(), 10u * frames.rows());
  for (int v : out) EXPECT_EQ(v, 2);
}

TEST(Evaluate, EditDistanceBasics) {
  EXPECT_EQ(edit_distance({1, 2, 3}, {1, 2, 3}), 0u);
  EXPECT_EQ(edit_distance({}, {1, 2, 3}), 3u);
  EXPECT_EQ(edit_distance({1, 2, 3}, {}), 3u);
  EXPECT_EQ(edit_distance({1, 3}, {1, 2, 3}), 1u);
  EXPECT_EQ(edit_distance({2, 2}, {1, 2}), 1u);
}

// Handcrafted two-token recognizer: the joiner fires token k on frames
// aligned with prototype e_k, and the predictor row for k suppresses an
// immediate re-emission, so greedy decoding is exact on repeat-free label
// sequences and the evaluated TER is 0.
TEST(Evaluate, PerfectDecodesGiveZeroTer) {
  ToyModelParams p;
  p.frame_dim = 2;
  p.embed_dim = 2;
  p.vocab = 2;
  p.speech_proj = Matrix::from_rows({{5.0, 0.0}, {0.0, 5.0}});
  p.speech_bias = Matrix(1, 2, 0.0);
  p.text_table = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  p.pred_table = Matrix::from_rows({{-2.0, 0.0}, {0.0, -2.0}, {0.0, 0.0}});
  p.joiner_out = Matrix::from_rows({{4.0, 0.0, 0.0}, {0.0, 4.0, 0.0}});
  p.joiner_bias = Matrix::from_rows({{0.0, 0.0, 1.0}});

  std::vector<ToyExample> dataset;
  for (const std::vector<int>& labels :
       {std::vector<int>{0, 1}, {1, 0}, {0, 1, 0}, {1, 0, 1}}) {
    ToyExample ex;
    ex.labels = labels;
    ex.frames = Matrix(labels.size(), 2, 0.0);
    for (std::size_t t = 0; t < labels.size(); ++t) {
      ex.frames(t, static_cast<std::size_t>(labels[t])) = 1.0;
    }
    EXPECT_EQ(greedy_decode(p, ex.frames), ex.labels);
    dataset.push_back(std::move(ex));
  }
  EvalResult r = evaluate(p, dataset, PointwiseLossKind::kMae);
  EXPECT_DOUBLE_EQ(r.token_error_rate, 0.0);
}

TEST(Evaluate, PerfectAndEmptyDecodes) {
  Rng rng(10);
  auto data = gen_dataset(rng, 4, 4, 4);
  // Blank-favoring model: every hypothesis is empty, TER is exactly 1.
  ToyModelParams p = init_toy_params(4, 4, 4, rng, /*scale=*/0.0);
  p.joiner_bias(0, p.vocab) = 5.0;
  EvalResult r = evaluate(p, data, PointwiseLossKind::kMae);
  EXPECT_DOUBLE_EQ(r.token_error_rate, 1.0);
  EXPECT_THROW(evaluate(p, {}, PointwiseLossKind::kMae), UsageError);
}

TEST(Evaluate, UntrainedModelHasHighTer) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Rng rng(seed);
    auto data = gen_dataset(rng, 30, 8, 8);
    ToyModelParams p = init_toy_params(8, 8, 8, rng);
    EvalResult r = evaluate(p, data, PointwiseLossKind::kMae);
    EXPECT_GT(r.token_error_rate, 0.7) << "seed " << seed;
  }
}

// The part of the modality-matching story that reproduces at desk scale:
// full training runs with the consistency loss close the speech-text
// embedding gap by well over 30% against the plain-transducer baseline.
TEST(RunToyTraining, ModalityGapClosesAcrossSeeds) {
  std::vector<double> with_lc, base_lc;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ToyRunConfig with;
    with.train.seed = seed;
    ToyRunConfig base = with;
    base.train.lambda_consistency = 0.0;
    base.train.enable_consistency = false;
    base.train.enable_text_branch = false;
    with_lc.push_back(run_toy_training(with).eval.mean_l_c);
    base_lc.push_back(run_toy_training(base).eval.mean_l_c);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  EXPECT_LE(median(with_lc), 0.7 * median(base_lc));
}

TEST(RunToyTraining, MetricStreamIsDeterministicAndWellFormed) {
  ToyRunConfig cfg;
  cfg.train.seed = 13;
  cfg.train.steps = 20;
  cfg.train_examples = 8;
  cfg.eval_examples = 4;
  std::ostringstream m1, m2;
  ToyRunResult r1 = run_toy_training(cfg, &m1);
  ToyRunResult r2 = run_toy_training(cfg, &m2);
  EXPECT_EQ(m1.str(), m2.str());
  EXPECT_EQ(r1.eval.token_error_rate, r2.eval.token_error_rate);
  EXPECT_EQ(r1.eval.mean_l_c, r2.eval.mean_l_c);

  std::istringstream lines(m1.str());
  std::string line;
  std::int64_t expected_step = 0;
  while (std::getline(lines, line)) {
    nlohmann::json rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec.at("step").get<std::int64_t>(), expected_step++);
    for (const char* key :
         {"rnnt_loss", "l_hat_norm", "l_c_exact", "text_loss"}) {
      EXPECT_TRUE(rec.contains(key)) << key;
    }
  }
  EXPECT_EQ(expected_step, 20);
}

}  // namespace
}  // namespace astra
