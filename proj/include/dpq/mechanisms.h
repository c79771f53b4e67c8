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
#ifndef DPQ_MECHANISMS_H_
#define DPQ_MECHANISMS_H_

#include <cstdint>
#include <vector>

#include "dpq/core.h"
#include "dpq/priors.h"
#include "json.hpp"

namespace dpq {

enum class Adaptation { kConditional, kEdge };

struct Schedule {
  enum class Kind { kUniform, kPower };
  Kind kind = Kind::kUniform;
  double p = 2.0;  // power exponent, > 1

  static Schedule MakeUniform() { return Schedule{}; }
  static Schedule Power(double p);
};

struct ReleasePlan {
  QuantileList qs;
  double epsilon = 1.0;
  int arity = 2;
  Adaptation adaptation = Adaptation::kEdge;
  Schedule schedule;
  std::vector<Prior> priors;  // one per quantile
  // Legacy mode: global per-depth budgets
  // eps_bar / k^p additionally divided by the node's call count. The default
  // (false) assigns budgets so sequential composition totals exactly epsilon.
  bool global_depth_budgets = false;
};

// One exponential-mechanism call in the release tree.
struct BudgetLogEntry {
  int node_id = 0;
  int parent_id = -1;
  int depth = 1;            // root = 1
  int quantile_index = 0;   // 0-based index into plan.qs
  int calls_at_node = 1;    // |i| at this node
  double per_call_epsilon = 0.0;
  // Restricted dataset = original indices [lo_index, hi_index), 0-based.
  std::int64_t lo_index = 0;
  std::int64_t hi_index = 0;
};

struct ReleaseResult {
  std::vector<double> outputs;  // ascending, one per quantile
  std::vector<BudgetLogEntry> budget_log;
  std::vector<std::int64_t> gaps;  // per-quantile gap against the input data
  std::int64_t max_gap = 0;

  // JSON-lines records (quantile, output, per-call epsilon, depth).
  std::vector<nlohmann::json> ToJsonLines(const QuantileList& qs) const;
};

// Log-weights of the n+1 intervals of x for one EM call:
// -eps * gap(x, q, I_k) / 2 + log mass(prior, I_k) (-inf for zero mass).
std::vector<double> em_log_weights(const SortedDataset& x, double q, double eps,
                                   const Prior& prior);

// Single-quantile release: Gumbel-max over em_log_weights, then a conditional
// prior draw from the winning interval.
double release_single(const SortedDataset& x, double q, double eps,
                      const Prior& prior, RandomSource& rng);

// Tree-structured multi-quantile release with prediction priors.
ReleaseResult release_multi(const SortedDataset& x, const ReleasePlan& plan,
                            RandomSource& rng);

// Per-depth per-call budgets of the balanced K-ary tree over m quantiles,
// summing to exactly eps along every full-depth path.
std::vector<double> budget_schedule(int m, int K, double eps, const Schedule& schedule);

// ceil(exp(sqrt(ln 2 * ln(m + 1)))), clamped to >= 2.
int default_arity(int m);

enum class BoundVariant { kSingle, kBinary, kKAry, kConditional };

// Closed-form high-probability gap bounds (diagnostic only).
double theoretical_gap_bound(int m, double eps, double beta, double psi,
                             BoundVariant variant);

}  // namespace dpq

#endif  // DPQ_MECHANISMS_H_
