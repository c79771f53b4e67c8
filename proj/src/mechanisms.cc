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
#include "dpq/mechanisms.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGoldenRatio = 1.6180339887498948482;
constexpr double kPi = 3.14159265358979323846;
// Relative quantiles are clamped into (0,1) this far from the ends; they can
// land exactly on 0 or 1 when the quantile list contains duplicates.
constexpr double kRelQuantileClamp = 1e-12;

// Smallest L >= 1 with K^L >= count + 1, i.e. ceil(log_K(count + 1)): the
// number of levels a K-ary release tree needs for `count` quantiles.
int SubtreeLevels(int count, int K) {
  int levels = 1;
  std::int64_t reach = K;
  while (reach < static_cast<std::int64_t>(count) + 1) {
    reach *= K;
    ++levels;
  }
  return levels;
}

int CeilLog2(int m) {  // ceil(log2(m)) for m >= 1
  int l = 0;
  std::int64_t reach = 1;
  while (reach < m) {
    reach *= 2;
    ++l;
  }
  return l;
}

double DepthWeight(const Schedule& s, int depth) {
  return s.kind == Schedule::Kind::kUniform
             ? 1.0
             : std::pow(static_cast<double>(depth), -s.p);
}

struct TreeState {
  const SortedDataset* x;
  const ReleasePlan* plan;
  RandomSource* rng;
  std::vector<double> outputs;
  std::vector<BudgetLogEntry> log;
  int next_node_id = 0;
  std::vector<double> strict_depth_eps;  // 1-based by depth; strict mode only
};

double StrictDepthEps(const TreeState& st, int depth) {
  const ReleasePlan& plan = *st.plan;
  if (plan.schedule.kind == Schedule::Kind::kUniform) {
    return plan.epsilon / static_cast<double>(st.strict_depth_eps.size());
  }
  // eps_bar / k^p, extended by the same formula past the nominal depth.
  double denom = 0.0;
  for (std::size_t k = 1; k <= st.strict_depth_eps.size(); ++k) {
    denom += std::pow(static_cast<double>(k), -plan.schedule.p);
  }
  double eps_bar = plan.epsilon / (static_cast<double>(plan.arity - 1) * denom);
  return eps_bar * std::pow(static_cast<double>(depth), -plan.schedule.p);
}

// One tree node: runs |i| EM calls on the data restricted to (a_hat, b_hat)
// and recurses on the induced sub-intervals.
void ReleaseNode(TreeState& st, const std::vector<int>& j, double q_lo,
                 double q_hi, double a_hat, double b_hat, double remaining_eps,
                 int depth, int parent_id) {
  if (j.empty()) return;
  const ReleasePlan& plan = *st.plan;
  const int K = plan.arity;
  const int cnt = static_cast<int>(j.size());

  const int levels = SubtreeLevels(cnt, K);
  double weight_sum = 0.0;
  for (int k = depth; k < depth + levels; ++k) weight_sum += DepthWeight(plan.schedule, k);
  const double node_eps = remaining_eps * DepthWeight(plan.schedule, depth) / weight_sum;

  // Splitting indices i = (j_[ceil(|j|/K)], ..., j_[ceil((K-1)|j|/K)]);
  // when fewer than K indices remain, all of them are released here.
  std::vector<int> split_pos;  // 0-based positions within j
  std::vector<int> splits;
  if (cnt < K) {
    splits = j;
  } else {
    for (int c = 1; c <= K - 1; ++c) {
      int pos = static_cast<int>((static_cast<std::int64_t>(c) * cnt + K - 1) / K) - 1;
      split_pos.push_back(pos);
      splits.push_back(j[pos]);
    }
  }
  const int calls = static_cast<int>(splits.size());
  const double per_call = (plan.global_depth_budgets ? StrictDepthEps(st, depth)
                                                     : node_eps) /
                          static_cast<double>(calls);

  auto [x_hat, offset] = restrict_to(*st.x, a_hat, b_hat);
  const int node_id = st.next_node_id++;

  std::vector<double> released(calls);
  for (int c = 0; c < calls; ++c) {
    const int qi = splits[c];
    double q = plan.qs.qs[qi];
    double rel = (q - q_lo) / (q_hi - q_lo);
    rel = std::min(std::max(rel, kRelQuantileClamp), 1.0 - kRelQuantileClamp);
    Prior adapted = plan.adaptation == Adaptation::kConditional
                        ? plan.priors[qi].AdaptConditional(a_hat, b_hat)
                        : plan.priors[qi].AdaptEdge(a_hat, b_hat);
    released[c] = release_single(x_hat, rel, per_call, adapted, *st.rng);

    BudgetLogEntry entry;
    entry.node_id = node_id;
    entry.parent_id = parent_id;
    entry.depth = depth;
    entry.quantile_index = qi;
    entry.calls_at_node = calls;
    entry.per_call_epsilon = per_call;
    entry.lo_index = offset;
    entry.hi_index = offset + x_hat.n();
    st.log.push_back(entry);
  }
  // Out-of-order draws are sorted back; this cannot increase any gap.
  std::sort(released.begin(), released.end());
  for (int c = 0; c < calls; ++c) st.outputs[splits[c]] = released[c];

  if (cnt < K) return;

  const double child_eps = remaining_eps - node_eps;
  for (int block = 0; block < K; ++block) {
    int lo_pos = block == 0 ? 0 : split_pos[block - 1] + 1;
    int hi_pos = block == K - 1 ? cnt : split_pos[block];
    std::vector<int> child(j.begin() + lo_pos, j.begin() + hi_pos);
    if (child.empty()) continue;
    double child_a = block == 0 ? a_hat : released[block - 1];
    double child_b = block == K - 1 ? b_hat : released[block];
    double child_qlo = block == 0 ? q_lo : plan.qs.qs[splits[block - 1]];
    double child_qhi = block == K - 1 ? q_hi : plan.qs.qs[splits[block]];
    if (!(child_a < child_b)) {
      // Degenerate range (an edge atom landed exactly on the boundary):
      // every quantile inside collapses onto that point.
      for (int qi : child) st.outputs[qi] = child_a;
      continue;
    }
    ReleaseNode(st, child, child_qlo, child_qhi, child_a, child_b, child_eps,
                depth + 1, node_id);
  }
}

}  // namespace

Schedule Schedule::Power(double p) {
  if (!(p > 1.0)) throw ConfigError("power schedule requires p > 1");
  Schedule s;
  s.kind = Kind::kPower;
  s.p = p;
  return s;
}

std::vector<double> em_log_weights(const SortedDataset& x, double q, double eps,
                                   const Prior& prior) {
  std::vector<double> logw(x.n() + 1, -kInf);
  const std::int64_t rank = rank_index(q, x.n());
  for (std::int64_t k = 0; k <= x.n(); ++k) {
    double mass = prior.Mass(x.interval(k));
    if (mass <= 0.0) continue;
    // gap is constant on I_k: any interior point has exactly k points below.
    double g = static_cast<double>(std::llabs(k - rank));
    logw[k] = -eps * g / 2.0 + std::log(mass);
  }
  return logw;
}

double release_single(const SortedDataset& x, double q, double eps,
                      const Prior& prior, RandomSource& rng) {
  if (!(eps > 0.0)) throw ConfigError("release requires eps > 0");
  std::vector<double> logw = em_log_weights(x, q, eps, prior);
  std::int64_t best = -1;
  double best_score = -kInf;
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(logw.size()); ++k) {
    if (logw[k] == -kInf) continue;
    double score = logw[k] + rng.Gumbel();
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  if (best < 0) throw Error("release: prior mass vanishes on every interval");
  return prior.SampleIn(x.interval(best), rng);
}

ReleaseResult release_multi(const SortedDataset& x, const ReleasePlan& plan,
                            RandomSource& rng) {
  const int m = plan.qs.m();
  if (static_cast<int>(plan.priors.size()) != m) {
    throw ConfigError("release plan needs one prior per quantile");
  }
  if (plan.arity < 2) throw ConfigError("tree arity must be >= 2");
  if (!(plan.epsilon > 0.0)) throw ConfigError("release requires eps > 0");

  TreeState st;
  st.x = &x;
  st.plan = &plan;
  st.rng = &rng;
  st.outputs.assign(m, 0.0);
  if (plan.global_depth_budgets) {
    // Nominal tree depth as each theorem statement reads it: ceil(log2 m)
    // for the binary conditional lemma, ceil(log_K(m+1)) otherwise.
    int depth = (plan.arity == 2 &&
                 plan.schedule.kind == Schedule::Kind::kUniform &&
                 plan.adaptation == Adaptation::kConditional)
                    ? std::max(CeilLog2(m), 1)
                    : SubtreeLevels(m, plan.arity);
    st.strict_depth_eps.assign(depth, 0.0);
  }

  std::vector<int> all(m);
  for (int i = 0; i < m; ++i) all[i] = i;
  ReleaseNode(st, all, 0.0, 1.0, -kInf, kInf, plan.epsilon, 1, -1);

  ReleaseResult result;
  result.outputs = std::move(st.outputs);
  result.budget_log = std::move(st.log);
  result.gaps.resize(m);
  for (int i = 0; i < m; ++i) result.gaps[i] = gap(x, plan.qs.qs[i], result.outputs[i]);
  result.max_gap = *std::max_element(result.gaps.begin(), result.gaps.end());
  return result;
}

std::vector<nlohmann::json> ReleaseResult::ToJsonLines(const QuantileList& qs) const {
  std::vector<nlohmann::json> lines;
  std::vector<const BudgetLogEntry*> by_quantile(outputs.size(), nullptr);
  for (const auto& e : budget_log) by_quantile[e.quantile_index] = &e;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    nlohmann::json j;
    j["quantile"] = qs.qs[i];
    j["output"] = outputs[i];
    if (by_quantile[i] != nullptr) {
      j["per_call_epsilon"] = by_quantile[i]->per_call_epsilon;
      j["depth"] = by_quantile[i]->depth;
    }
    if (!gaps.empty()) j["gap"] = gaps[i];
    lines.push_back(std::move(j));
  }
  return lines;
}

std::vector<double> budget_schedule(int m, int K, double eps, const Schedule& schedule) {
  if (m < 1 || K < 2) throw ConfigError("budget_schedule requires m >= 1, K >= 2");
  if (schedule.kind == Schedule::Kind::kPower && !(schedule.p > 1.0)) {
    throw ConfigError("power schedule requires p > 1");
  }
  const int depth = SubtreeLevels(m, K);
  double weight_sum = 0.0;
  for (int k = 1; k <= depth; ++k) weight_sum += DepthWeight(schedule, k);
  std::vector<double> per_call(depth);
  for (int k = 1; k <= depth; ++k) {
    per_call[k - 1] =
        eps * DepthWeight(schedule, k) / (weight_sum * static_cast<double>(K - 1));
  }
  return per_call;
}

int default_arity(int m) {
  if (m < 1) throw ConfigError("default_arity requires m >= 1");
  double k = std::exp(std::sqrt(std::log(2.0) * std::log(static_cast<double>(m) + 1.0)));
  return std::max(2, static_cast<int>(std::ceil(k - 1e-12)));
}

double theoretical_gap_bound(int m, double eps, double beta, double psi,
                             BoundVariant variant) {
  if (!(psi > 0.0 && psi <= 1.0) || !(beta > 0.0 && beta <= 1.0)) {
    throw ConfigError("theoretical_gap_bound requires psi in (0,1], beta in (0,1]");
  }
  switch (variant) {
    case BoundVariant::kSingle:
      return 2.0 / eps * std::log(1.0 / (beta * psi));
    case BoundVariant::kBinary: {
      double l = std::log2(static_cast<double>(m) + 1.0);
      double lc = static_cast<double>(SubtreeLevels(m, 2));
      return 2.0 / eps * std::pow(kGoldenRatio, l) * lc *
             std::log(static_cast<double>(m) / (beta * psi));
    }
    case BoundVariant::kKAry:
      return 2.0 * kPi * kPi / eps *
             std::exp(2.0 * std::sqrt(std::log(2.0) *
                                      std::log(static_cast<double>(m) + 1.0))) *
             std::log(static_cast<double>(m) / (beta * psi));
    case BoundVariant::kConditional: {
      double lc = static_cast<double>(std::max(CeilLog2(m), 1));
      return 2.0 / eps * lc * lc * std::log(static_cast<double>(m) / (beta * psi));
    }
  }
  throw Error("unreachable bound variant");
}

}  // namespace dpq
