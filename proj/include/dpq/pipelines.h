/*
 * Copyright 2026 the dpquant authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef DPQ_PIPELINES_H_
#define DPQ_PIPELINES_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dpq/core.h"
#include "dpq/learning.h"
#include "dpq/losses.h"
#include "dpq/mechanisms.h"
#include "dpq/priors.h"
#include "json.hpp"

namespace dpq {

struct ExperimentConfig {
  std::string task = "oneshot";  // oneshot | pubpri | sequential
  int m = 9;
  std::vector<double> quantiles;  // empty -> m uniformly spaced
  std::vector<double> epsilons = {1.0};
  int trials = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> methods;  // empty -> task default

  // Priors and robustness.
  double lambda = 0.1;  // robust mixing coefficient
  double uniform_lo = -10.0;
  double uniform_hi = 10.0;
  double cauchy_location = 0.0;
  double cauchy_scale = 1.0;
  bool robust_nonnegative = false;  // half-Cauchy robust prior
  double prev_scale = 1.0;          // PubPrev Laplace scale

  // Parameter boxes and losses.
  double B = 10.0;
  double sigma_min = 0.05;
  double sigma_max = 10.0;
  double granularity = 0.1;  // proxy-loss interval width

  // Release tree.
  int arity = 2;  // 0 -> default_arity(m)
  std::string adaptation = "conditional";  // conditional | edge
  std::string schedule = "uniform";        // uniform | power
  double schedule_p = 2.0;
  bool global_depth_budgets = false;
  // Pessimistic T-fold budget division when individuals repeat across days.
  bool overlapping_users = false;

  // Learners.
  std::string optimizer = "cocob";  // pubfit: cocob | ogd
  double eps_learn_fraction = 0.5;  // dpftrl: eps' = fraction * eps
  double delta_learn = 1e-6;

  // Data.
  std::string data_path;
  std::string value_column;
  std::vector<std::string> feature_columns;
  std::string group_column;
  std::string feature_mode = "average";  // average | first
  double tie_jitter = 0.0;
  int n = 100;          // private block / generated dataset size
  int public_n = 10000; // generated public data size
  int days = 100;       // sequential horizon T
  double synth_noise = 0.0;
  int synth_dim = 10;

  int threads = 1;
  std::string format = "jsonl";  // jsonl | csv record stream
  std::string out_dir;           // runtime flag, never serialized

  static ExperimentConfig FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
  QuantileList Quantiles() const;
  Prior RobustPrior() const;
};

struct TrialRecord {
  std::string method;
  double epsilon = 0.0;
  std::int64_t trial = 0;  // trial index, or day for sequential runs
  std::vector<std::int64_t> gaps;
  std::int64_t max_gap = 0;
  double wall_ms = 0.0;  // diagnostic only; never serialized

  nlohmann::json ToJson() const;
};

struct SummaryRow {
  std::string method;
  double epsilon;
  double mean_max_gap;
  double median_max_gap;
  double p5;
  double p95;
};

struct SyntheticData {
  std::vector<std::vector<double>> datasets;  // per-day values
  std::vector<std::vector<double>> features;  // per-day feature vector
  std::vector<std::vector<double>> truth;     // per-day noiseless quantile values
};

// Stationary task where the quantiles are fixed linear functions of a random
// Gaussian feature vector: cell i of day t spans
// (<a, f_t> + b_[i], <a, f_t> + b_[i+1]) and holds
// floor(100/(m+1)) + Poisson(noise_scale) uniform points.
SyntheticData generate_synthetic(int days, int m, double noise_scale,
                                 RandomSource& rng, int dim = 10);

// Fits per-quantile Laplace priors on shuffled public data split into
// floor(N/n) blocks of size n, with the constant feature f = (1).
std::vector<Prior> pubfit(const std::vector<double>& public_values, int n,
                          const QuantileList& qs, const ExperimentConfig& cfg,
                          RandomSource& rng);

// Empirical public quantile x'_[floor(qN)+1] per quantile.
std::vector<double> public_quantiles(const std::vector<double>& public_values,
                                     const QuantileList& qs);

// Cauchy priors located at the public quantiles.
std::vector<Prior> public_cauchy(const std::vector<double>& public_values,
                                 const QuantileList& qs, double scale);

// Public-private trials: fit priors on the public data once, then release on
// each private dataset. Methods: pubfit, pubfit-robust, public-quantiles,
// public-cauchy, uniform, cauchy.
std::vector<TrialRecord> run_pubpri(
    const std::vector<double>& public_values,
    const std::vector<std::vector<double>>& private_datasets,
    const std::string& method, double epsilon, const ExperimentConfig& cfg,
    RandomSource& rng);

// Sequential release over a stream of datasets. Methods: static-uniform,
// static-cauchy, static-halfcauchy, pubprox, pubprev, dpftrl, nonprivate.
std::vector<TrialRecord> run_sequential(
    const std::vector<std::vector<double>>& datasets,
    const std::vector<std::vector<double>>& features, const std::string& method,
    double epsilon, const ExperimentConfig& cfg, RandomSource& rng);

std::vector<SummaryRow> aggregate(const std::vector<TrialRecord>& records);

std::string summary_csv(const std::vector<SummaryRow>& rows);

struct IngestResult {
  std::vector<std::string> groups;  // in order of first appearance
  std::vector<std::vector<double>> datasets;
  std::vector<std::vector<double>> features;
};

IngestResult ingest_csv(const std::string& path, const std::string& value_column,
                        const std::vector<std::string>& feature_columns,
                        const std::string& group_column,
                        const std::string& feature_mode);

// Release plan assembled from config (priors supplied by the caller).
ReleasePlan make_plan(const QuantileList& qs, double epsilon,
                      const ExperimentConfig& cfg, std::vector<Prior> priors);

}  // namespace dpq

#endif  // DPQ_PIPELINES_H_
