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

// Command-line surface for the lattice library.
//
// Exit codes: 0 success, 1 tolerance exceeded (gradcheck / oracle-check),
// 2 usage error, 3 format error, 4 degenerate input.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "astra/astra.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTolerance = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDegenerate = 4;

astra::PointwiseLossKind parse_pointwise(const std::string& name) {
  if (name == "mae") return astra::PointwiseLossKind::kMae;
  if (name == "mse") return astra::PointwiseLossKind::kMse;
  throw astra::UsageError("pointwise loss must be 'mae' or 'mse'");
}

void emit_result(const std::string& json, const std::string& output_path) {
  if (output_path.empty()) {
    std::cout << json << '\n';
    return;
  }
  std::ofstream out(output_path);
  if (!out) {
    throw astra::FormatError("cannot open " + output_path + " for writing");
  }
  out << json << '\n';
}

struct TensorIoOpts {
  std::string input;
  std::string output;
  std::string pointwise = "mae";
};

struct CheckOpts {
  std::size_t trials = 200;
  std::uint64_t seed = 7;
  std::size_t max_t = 5;
  std::size_t max_u = 4;
  double tol = 0.0;  // 0 = per-check defaults
};

struct ToyOpts {
  std::uint64_t seed = 13;
  std::size_t steps = 2000;
  double lambda = 0.1;
  bool text_branch = true;
  double mask_prob = 0.15;
  std::string metrics;
  std::string pointwise = "mae";
  double lr = 0.05;
  double lambda_text = 0.5;
  std::size_t train_n = 128;
  std::size_t eval_n = 256;

  astra::ToyRunConfig to_run_config() const {
    astra::ToyRunConfig cfg;
    cfg.train.seed = seed;
    cfg.train.steps = steps;
    cfg.train.learning_rate = lr;
    cfg.train.lambda_consistency = lambda;
    cfg.train.enable_consistency = lambda > 0.0;
    cfg.train.lambda_text = lambda_text;
    cfg.train.enable_text_branch = text_branch;
    cfg.train.text_mask_prob = mask_prob;
    cfg.train.pointwise = parse_pointwise(pointwise);
    cfg.train_examples = train_n;
    cfg.eval_examples = eval_n;
    return cfg;
  }
};

int run_rnnt(const TensorIoOpts& opts) {
  nlohmann::json root = astra::load_json_file(opts.input);
  astra::LogProbGrid grid(astra::tensor_from_json(root, "blank_lp"),
                          astra::tensor_from_json(root, "emit_lp"));
  astra::LatticeResult res = astra::rnnt_backward(grid);
  astra::JsonObjectWriter w;
  w.scalar("log_prob", res.value);
  w.matrix("emit_marginals", res.emit_marginals);
  w.matrix("blank_marginals", res.blank_marginals);
  emit_result(w.str(), opts.output);
  return kExitOk;
}

int run_astra(const TensorIoOpts& opts) {
  nlohmann::json root = astra::load_json_file(opts.input);
  astra::LogProbGrid grid(astra::tensor_from_json(root, "blank_lp"),
                          astra::tensor_from_json(root, "emit_lp"));
  astra::EmbeddingSequence speech(astra::tensor_from_json(root, "speech_emb"));
  astra::EmbeddingSequence text(astra::tensor_from_json(root, "text_emb"));
  astra::WeightGrid weights =
      astra::build_weight_grid(speech, text, parse_pointwise(opts.pointwise));
  astra::ConsistencyResult res = astra::consistency_losses(grid, weights);
  astra::JsonObjectWriter w;
  w.scalar("log_z", res.log_z);
  w.scalar("log_zw", res.log_zw);
  w.scalar("l_hat_norm", res.l_hat_norm);
  w.scalar("l_hat_literal", res.l_hat_literal);
  w.scalar("l_c_exact", res.l_c_exact);
  w.matrix("grad_w", res.grad_w);
  emit_result(w.str(), opts.output);
  return kExitOk;
}

int run_ctc(const TensorIoOpts& opts) {
  nlohmann::json root = astra::load_json_file(opts.input);
  astra::CtcGrid grid =
      astra::make_ctc_grid(astra::tensor_from_json(root, "ctc_lp"),
                           astra::int_sequence_from_json(root, "labels"));
  astra::JsonObjectWriter w;
  if (root.contains("w")) {
    astra::WeightGrid weights{astra::tensor_from_json(root, "w")};
    astra::CtcResult res = astra::ctc_weighted_posteriors(grid, weights);
    w.scalar("log_prob", astra::ctc_forward(grid));
    w.scalar("weighted_log_prob", res.value);
    w.matrix("state_posteriors", res.state_posteriors);
  } else {
    astra::CtcResult res = astra::ctc_posteriors(grid);
    w.scalar("log_prob", res.value);
    w.matrix("state_posteriors", res.state_posteriors);
  }
  emit_result(w.str(), opts.output);
  return kExitOk;
}

int run_gradcheck(const CheckOpts& opts) {
  astra::GradCheckConfig cfg;
  cfg.trials = opts.trials;
  cfg.seed = opts.seed;
  astra::GradCheckReport report = astra::run_gradcheck(cfg);
  std::printf("gradcheck: %zu trials, seed %llu\n", cfg.trials,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("  lattice grads      max rel err %.3e (tol 1e-6)\n",
              report.max_rel_lattice);
  std::printf("  consistency grads  max rel err %.3e (tol 1e-5)\n",
              report.max_rel_consistency);
  std::printf("  embedding grads    max rel err %.3e (tol 1e-5)\n",
              report.max_rel_embedding);
  std::printf("  toy chain grads    max rel err %.3e (tol 1e-4)\n",
              report.max_rel_toy);
  std::printf("max relative error: %.3e\n", report.max_rel());
  const bool ok = opts.tol > 0.0 ? report.max_rel() < opts.tol : report.ok();
  if (!ok) {
    std::fprintf(stderr, "gradcheck: tolerance exceeded\n");
    return kExitTolerance;
  }
  return kExitOk;
}

int run_oracle_check(const CheckOpts& opts) {
  astra::OracleCheckConfig cfg;
  cfg.trials = opts.trials;
  cfg.seed = opts.seed;
  cfg.max_t = opts.max_t;
  cfg.max_u = opts.max_u;
  astra::OracleCheckReport report = astra::run_oracle_check(cfg);
  std::printf("oracle-check: %zu transducer + %zu ctc trials, seed %llu\n",
              report.rnnt_trials, report.ctc_trials,
              static_cast<unsigned long long>(cfg.seed));
  std::printf("  transducer max abs discrepancy %.3e\n", report.max_abs_rnnt);
  std::printf("  ctc        max abs discrepancy %.3e\n", report.max_abs_ctc);
  std::printf("max absolute discrepancy: %.3e\n", report.max_abs());
  const double tol = opts.tol > 0.0 ? opts.tol : 1e-9;
  if (!report.ok(tol)) {
    std::fprintf(stderr, "oracle-check: tolerance of %g exceeded\n", tol);
    return kExitTolerance;
  }
  return kExitOk;
}

int run_toy(const ToyOpts& opts, bool emit_metrics) {
  astra::ToyRunConfig cfg = opts.to_run_config();
  astra::ToyRunResult result;
  if (emit_metrics && !opts.metrics.empty()) {
    std::ofstream metrics(opts.metrics);
    if (!metrics) {
      throw astra::FormatError("cannot open " + opts.metrics +
                               " for writing");
    }
    result = astra::run_toy_training(cfg, &metrics);
  } else {
    result = astra::run_toy_training(
        cfg, emit_metrics ? &std::cout : nullptr);
  }
  if (result.skipped > 0) {
    std::fprintf(stderr, "skipped %zu degenerate examples\n", result.skipped);
  }
  astra::JsonObjectWriter w;
  w.scalar("ter", result.eval.token_error_rate);
  w.scalar("mean_l_c", result.eval.mean_l_c);
  std::cout << w.str() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Alignment-marginalized speech-text consistency on transducer "
      "lattices"};
  app.require_subcommand(1);

  TensorIoOpts rnnt_opts, astra_opts, ctc_opts;
  CheckOpts grad_opts, oracle_opts;
  grad_opts.trials = 50;
  grad_opts.seed = 11;
  ToyOpts train_opts, eval_opts;
  eval_opts.steps = 0;  // untrained model by default

  auto add_tensor_io = [](CLI::App* sub, TensorIoOpts& opts,
                          bool with_pointwise) {
    sub->add_option("--input", opts.input, "input JSON tensor file")
        ->required();
    sub->add_option("--output", opts.output,
                    "result JSON path (stdout when omitted)");
    if (with_pointwise) {
      sub->add_option("--pointwise", opts.pointwise,
                      "pointwise loss: mae or mse")
          ->check(CLI::IsMember({"mae", "mse"}));
    }
  };

  add_tensor_io(app.add_subcommand(
                    "rnnt", "full-sum value and posterior edge marginals"),
                rnnt_opts, false);
  add_tensor_io(app.add_subcommand("astra",
                                   "alignment-marginalized consistency "
                                   "losses and gradients"),
                astra_opts, true);
  add_tensor_io(app.add_subcommand(
                    "ctc", "ctc forward values and state posteriors"),
                ctc_opts, false);

  CLI::App* grad = app.add_subcommand(
      "gradcheck", "finite-difference check of every analytic gradient");
  grad->add_option("--trials", grad_opts.trials, "random instances");
  grad->add_option("--seed", grad_opts.seed, "generator seed");
  grad->add_option("--tol", grad_opts.tol,
                   "override the pass tolerance for every gradient family");

  CLI::App* oracle = app.add_subcommand(
      "oracle-check", "lattice vs brute-force enumeration equivalence");
  oracle->add_option("--trials", oracle_opts.trials, "random instances");
  oracle->add_option("--seed", oracle_opts.seed, "generator seed");
  oracle->add_option("--max-t", oracle_opts.max_t, "max frame count");
  oracle->add_option("--max-u", oracle_opts.max_u, "max label count");
  oracle->add_option("--tol", oracle_opts.tol,
                     "override the 1e-9 pass tolerance");

  auto add_toy = [](CLI::App* sub, ToyOpts& opts) {
    sub->add_option("--seed", opts.seed, "run seed");
    sub->add_option("--steps", opts.steps, "training steps");
    sub->add_option("--lambda", opts.lambda, "consistency loss weight");
    sub->add_flag("--text-branch,!--no-text-branch", opts.text_branch,
                  "train the unpaired-text branch");
    sub->add_option("--mask-prob", opts.mask_prob,
                    "text-branch row masking probability");
    sub->add_option("--metrics", opts.metrics,
                    "write per-step JSON metrics to this file");
    sub->add_option("--pointwise", opts.pointwise,
                    "pointwise loss: mae or mse")
        ->check(CLI::IsMember({"mae", "mse"}));
    sub->add_option("--lr", opts.lr, "learning rate");
    sub->add_option("--lambda-text", opts.lambda_text, "text branch weight");
    sub->add_option("--train-n", opts.train_n, "training set size");
    sub->add_option("--eval-n", opts.eval_n, "held-out eval set size");
  };
  add_toy(app.add_subcommand("train-toy",
                             "train the toy model and report held-out "
                             "token error rate"),
          train_opts);
  add_toy(app.add_subcommand("eval-toy",
                             "evaluate a freshly initialized (or briefly "
                             "trained) toy model"),
          eval_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("rnnt")) return run_rnnt(rnnt_opts);
    if (app.got_subcommand("astra")) return run_astra(astra_opts);
    if (app.got_subcommand("ctc")) return run_ctc(ctc_opts);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(grad_opts);
    if (app.got_subcommand("oracle-check")) return run_oracle_check(oracle_opts);
    if (app.got_subcommand("train-toy")) return run_toy(train_opts, true);
    if (app.got_subcommand("eval-toy")) return run_toy(eval_opts, false);
  } catch (const astra::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const astra::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitFormat;
  } catch (const astra::DegenerateInputError& e) {
    std::fprintf(stderr, "degenerate input: %s\n", e.what());
    return kExitDegenerate;
  }
  return kExitUsage;
}
