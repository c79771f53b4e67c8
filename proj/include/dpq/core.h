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
#ifndef DPQ_CORE_H_
#define DPQ_CORE_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dpq {

// Base error for all library failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration or parameters (CLI exit code 1).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Bad or missing input data (CLI exit code 2).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

// Half-open interval (lo, hi]; lo may be -inf and hi may be +inf.
struct Interval {
  double lo;
  double hi;
  bool lo_open = true;
  bool hi_closed = true;

  bool contains(double o) const { return o > lo && o <= hi; }
};

// Strictly increasing sample of real values. Empty datasets are permitted
// (they arise from restrict()); most entry points require n >= 1.
class SortedDataset {
 public:
  SortedDataset() = default;
  // Sorts the input and enforces strict ordering. Exact ties are rejected
  // unless tie_jitter > 0, in which case tied runs are spread by multiples
  // of tie_jitter.
  explicit SortedDataset(std::vector<double> values, double tie_jitter = 0.0);

  std::int64_t n() const { return static_cast<std::int64_t>(values_.size()); }
  const std::vector<double>& values() const { return values_; }
  // 1-based order statistic x_[k], k in [1, n].
  double order_stat(std::int64_t k) const { return values_[k - 1]; }
  bool empty() const { return values_.empty(); }

  // The k-th interval I_k = (x_[k], x_[k+1]], k in [0, n], with
  // I_0 = (-inf, x_[1]] and I_n = (x_[n], +inf).
  Interval interval(std::int64_t k) const;

 private:
  struct AlreadySorted {};
  SortedDataset(std::vector<double> values, AlreadySorted)
      : values_(std::move(values)) {}
  std::vector<double> values_;

  friend std::pair<SortedDataset, std::int64_t> restrict_to(
      const SortedDataset& x, double a, double b);
};

// Ascending quantiles in the open unit interval.
struct QuantileList {
  std::vector<double> qs;

  QuantileList() = default;
  explicit QuantileList(std::vector<double> quantiles);
  // m quantiles i/(m+1), i = 1..m.
  static QuantileList Uniform(int m);

  int m() const { return static_cast<int>(qs.size()); }
};

// Deterministic seeded randomness. Single-owner: never share an instance
// across concurrent work; use split() to derive independent child sources.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed);

  double Uniform();        // [0, 1)
  double Normal();         // standard normal
  double Gumbel();         // standard Gumbel, for max-trick sampling
  std::uint64_t Integer(); // raw 64-bit draw

  // Deterministic child source; independent of subsequent parent draws.
  RandomSource Split(std::uint64_t index) const;
  // The sub-seed used by Split, exposed for trial orchestration.
  static std::uint64_t SubSeed(std::uint64_t seed, std::uint64_t index);

  std::string SaveState() const;
  void LoadState(const std::string& state);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Index r = floor(q * n), with a 1e-9 absolute tolerance before flooring so
// exact multiples are stable across platforms.
std::int64_t rank_index(double q, std::int64_t n);

// Gap_q(x, o) = | #{i : x_[i] < o} - floor(q n) |.
std::int64_t gap(const SortedDataset& x, double q, double o);

// The unique interval on which gap(x, q, .) vanishes.
Interval optimal_interval(const SortedDataset& x, double q);

// Sub-dataset of values strictly inside (a, b), plus the offset
// #{i : x_[i] <= a} recovering parent indices.
std::pair<SortedDataset, std::int64_t> restrict_to(const SortedDataset& x,
                                                   double a, double b);

// psi_x: minimum spacing between consecutive entries. Requires n >= 2.
double min_separation(const SortedDataset& x);

// max_i Gap_{q_i}(x, o_i). Requires |outputs| = m.
std::int64_t max_gap(const SortedDataset& x, const QuantileList& qs,
                     const std::vector<double>& outputs);

}  // namespace dpq

#endif  // DPQ_CORE_H_
