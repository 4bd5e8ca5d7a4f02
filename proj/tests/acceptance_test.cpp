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

// Acceptance suite: every release gate in one binary, one pass/fail line
// each. Run it directly or through ctest.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "astra/astra.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CliOutput {
  int exit_code = -1;
  std::string out;
};

CliOutput run_cli(const std::string& args) {
  const std::string cmd =
      std::string(ASTRA_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  CliOutput result;
  if (pipe == nullptr) return result;
  char buf[4096];
  while (fgets(buf, sizeof buf, pipe) != nullptr) result.out += buf;
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

// 1. Transducer oracle equivalence: 200 random instances, all four
//    quantities within 1e-9 of brute-force enumeration, under 10 s.
bool criterion_1(std::string& detail) {
  const auto start = Clock::now();
  astra::Rng rng(2024);
  double max_abs = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(6);  // 1..6
    const std::size_t U = rng.uniform_int(5);      // 0..4
    astra::LogProbGrid grid = astra::random_grid(rng, T, U);
    astra::WeightGrid w = astra::random_weights(rng, T, U);
    astra::ConsistencyResult got = astra::consistency_losses(grid, w);
    astra::OracleLosses want = astra::oracle_losses(grid, w);
    max_abs = std::max({max_abs, std::abs(got.log_z - want.log_z),
                        std::abs(got.log_zw - want.log_zw),
                        std::abs(got.l_c_exact - want.l_c_exact),
                        std::abs(got.l_hat_norm - want.l_hat_norm)});
  }
  const double elapsed = seconds_since(start);
  detail = astra::detail::str_cat("max |lattice - oracle| = ", max_abs, ", ",
                                  elapsed, " s");
  return max_abs < 1e-9 && elapsed < 10.0;
}

// 2. CTC oracle equivalence: 100 random instances, plain and weighted
//    forward values within 1e-9 of enumeration.
bool criterion_2(std::string& detail) {
  astra::Rng rng(2025);
  double max_abs = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto [grid, w] = astra::random_ctc_instance(rng, 5, 4);
    max_abs = std::max(
        {max_abs,
         std::abs(astra::ctc_forward(grid) - astra::oracle_ctc_forward(grid)),
         std::abs(astra::ctc_weighted_forward(grid, w) -
                  astra::oracle_ctc_weighted_forward(grid, w))});
  }
  detail = astra::detail::str_cat("max |lattice - oracle| = ", max_abs);
  return max_abs < 1e-9;
}

// 3. Jensen bound: surrogate >= exact loss on 1000 random instances, with
//    equality for constant weights and single-path lattices.
bool criterion_3(std::string& detail) {
  astra::Rng rng(2026);
  double worst_gap = 0.0;       // most negative l_hat - l_c
  double worst_equality = 0.0;  // largest |l_hat - l_c| where bound is tight
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(5);
    const std::size_t U = rng.uniform_int(5);
    astra::LogProbGrid grid = astra::random_grid(rng, T, U);
    astra::WeightGrid w = astra::random_weights(rng, T, U);
    astra::ConsistencyResult res = astra::consistency_losses(grid, w);
    worst_gap = std::min(worst_gap, res.l_hat_norm - res.l_c_exact);
  }
  for (int trial = 0; trial < 50; ++trial) {
    // Constant weights over a random lattice.
    const std::size_t T = 1 + rng.uniform_int(5);
    const std::size_t U = rng.uniform_int(5);
    astra::LogProbGrid grid = astra::random_grid(rng, T, U);
    const double c = rng.uniform(0.0, 2.0);
    astra::ConsistencyResult res =
        astra::consistency_losses(grid, astra::WeightGrid{astra::Matrix(T, U, c)});
    worst_equality =
        std::max(worst_equality, std::abs(res.l_hat_norm - res.l_c_exact));
    // Single-path lattice: T = 1 forces one alignment for any U.
    const std::size_t u1 = rng.uniform_int(4);
    astra::LogProbGrid single = astra::random_grid(rng, 1, u1);
    astra::WeightGrid w1 = astra::random_weights(rng, 1, u1);
    astra::ConsistencyResult res1 = astra::consistency_losses(single, w1);
    worst_equality =
        std::max(worst_equality, std::abs(res1.l_hat_norm - res1.l_c_exact));
  }
  detail = astra::detail::str_cat("min(l_hat - l_c) = ", worst_gap,
                                  ", tight-case |l_hat - l_c| = ",
                                  worst_equality);
  return worst_gap >= -1e-12 && worst_equality < 1e-9;
}

// 4. Algebraic identities: exact zero-weight reduction, the c*U shift law,
//    unit gradient mass per label, and marginals inside [0, 1].
bool criterion_4(std::string& detail) {
  astra::Rng rng(2027);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(5);
    const std::size_t U = rng.uniform_int(5);
    astra::LogProbGrid grid = astra::random_grid(rng, T, U);

    astra::WeightGrid zero{astra::Matrix(T, U, 0.0)};
    if (astra::weighted_forward(grid, zero) != astra::rnnt_forward(grid)) {
      detail = "zero-weight reduction is not exact";
      return false;
    }

    astra::WeightGrid w = astra::random_weights(rng, T, U);
    const double c = rng.uniform(-1.0, 1.0);
    astra::WeightGrid shifted{w.w};
    for (double& v : shifted.w.data()) v += c;
    const double got = astra::weighted_forward(grid, shifted);
    const double want =
        astra::weighted_forward(grid, w) + c * static_cast<double>(U);
    if (std::abs(got - want) > 1e-9) {
      detail = astra::detail::str_cat("shift law off by ",
                                      std::abs(got - want));
      return false;
    }

    astra::ConsistencyResult res = astra::consistency_losses(grid, w);
    double mass = 0.0;
    for (double v : res.grad_w.data()) {
      mass += v;
      if (v < 0.0 || v > 1.0) {
        detail = "grad_w outside [0, 1]";
        return false;
      }
    }
    if (std::abs(mass - static_cast<double>(U)) > 1e-9) {
      detail = astra::detail::str_cat("grad_w mass ", mass, " != U = ", U);
      return false;
    }

    astra::LatticeResult lat = astra::rnnt_backward(grid);
    for (const astra::Matrix* m :
         {&lat.emit_marginals, &lat.blank_marginals}) {
      for (double v : m->data()) {
        if (v < 0.0 || v > 1.0) {
          detail = "marginal outside [0, 1]";
          return false;
        }
      }
    }
  }
  detail = "reduction, shift law, gradient mass, marginal range all hold";
  return true;
}

// 5. Gradient suite: 50 random instances of every analytic gradient against
//    central finite differences, under 60 s.
bool criterion_5(std::string& detail) {
  const auto start = Clock::now();
  astra::GradCheckConfig cfg;
  cfg.trials = 50;
  cfg.seed = 2028;
  astra::GradCheckReport report = astra::run_gradcheck(cfg);
  const double elapsed = seconds_since(start);
  detail = astra::detail::str_cat(
      "rel err: lattice ", report.max_rel_lattice, ", consistency ",
      report.max_rel_consistency, ", embedding ", report.max_rel_embedding,
      ", toy ", report.max_rel_toy, ", ", elapsed, " s");
  return report.max_rel_lattice < 1e-5 && report.max_rel_consistency < 1e-5 &&
         report.max_rel_embedding < 1e-5 && report.max_rel_toy < 1e-4 &&
         elapsed < 60.0;
}

// 6. Directional toy reproduction: with consistency + text branch, the
//    median final TER over 5 seeds does not exceed the plain-transducer
//    median (strictly lower on at least 3 seeds) and the median modality
//    gap drops by at least 30%. Budget: 10 minutes.
bool criterion_6(std::string& detail) {
  const auto start = Clock::now();
  std::vector<double> ter_with, ter_without, lc_with, lc_without;
  int strictly_lower = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    astra::ToyRunConfig with;
    with.train.seed = seed;
    with.train.steps = 2000;
    with.train.lambda_consistency = 0.1;
    with.train.enable_consistency = true;
    with.train.enable_text_branch = true;

    astra::ToyRunConfig without = with;
    without.train.lambda_consistency = 0.0;
    without.train.enable_consistency = false;
    without.train.enable_text_branch = false;

    const astra::ToyRunResult a = astra::run_toy_training(with);
    const astra::ToyRunResult b = astra::run_toy_training(without);
    ter_with.push_back(a.eval.token_error_rate);
    ter_without.push_back(b.eval.token_error_rate);
    lc_with.push_back(a.eval.mean_l_c);
    lc_without.push_back(b.eval.mean_l_c);
    if (a.eval.token_error_rate < b.eval.token_error_rate) ++strictly_lower;
  }
  const double elapsed = seconds_since(start);
  const double med_with = median(ter_with);
  const double med_without = median(ter_without);
  const double med_lc_with = median(lc_with);
  const double med_lc_without = median(lc_without);
  detail = astra::detail::str_cat(
      "median TER ", med_with, " (consistency) vs ", med_without,
      " (plain), strictly lower on ", strictly_lower,
      "/5 seeds; median mean_l_c ", med_lc_with, " vs ", med_lc_without, "; ",
      elapsed, " s");
  return med_with <= med_without && strictly_lower >= 3 &&
         med_lc_with <= 0.7 * med_lc_without && elapsed < 600.0;
}

// 7. Determinism of the CLI: identical train-toy metric streams and
//    identical oracle-check reports across repeated invocations.
bool criterion_7(std::string& detail) {
  namespace fs = std::filesystem;
  const std::string m1 =
      (fs::temp_directory_path() / "astra_accept_metrics_1.jsonl").string();
  const std::string m2 =
      (fs::temp_directory_path() / "astra_accept_metrics_2.jsonl").string();
  const std::string train_args =
      "train-toy --seed 13 --steps 50 --metrics ";
  CliOutput t1 = run_cli(train_args + m1);
  CliOutput t2 = run_cli(train_args + m2);
  if (t1.exit_code != 0 || t2.exit_code != 0) {
    detail = "train-toy did not exit cleanly";
    return false;
  }
  const std::string s1 = read_file(m1);
  if (s1.empty() || s1 != read_file(m2) || t1.out != t2.out) {
    detail = "train-toy streams differ between runs";
    return false;
  }
  const std::string check_args =
      "oracle-check --max-t 5 --max-u 4 --trials 100 --seed 7";
  CliOutput o1 = run_cli(check_args);
  CliOutput o2 = run_cli(check_args);
  if (o1.exit_code != 0 || o2.exit_code != 0 || o1.out != o2.out) {
    detail = "oracle-check reports differ between runs";
    return false;
  }
  detail = "metric streams and check reports byte-identical";
  return true;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    bool (*fn)(std::string&);
  };
  const Entry entries[] = {
      {"1 transducer oracle equivalence", criterion_1},
      {"2 ctc oracle equivalence", criterion_2},
      {"3 jensen bound", criterion_3},
      {"4 algebraic identities", criterion_4},
      {"5 gradient suite", criterion_5},
      {"6 toy directional reproduction", criterion_6},
      {"7 determinism", criterion_7},
  };
  int failures = 0;
  for (const Entry& e : entries) {
    std::string detail;
    const bool ok = e.fn(detail);
    std::printf("[%s] criterion %s: %s\n", ok ? "PASS" : "FAIL", e.name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
