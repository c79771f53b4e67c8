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
#include "dpq/core.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dpq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRankTolerance = 1e-9;

std::uint64_t SplitMix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

SortedDataset::SortedDataset(std::vector<double> values, double tie_jitter)
    : values_(std::move(values)) {
  std::sort(values_.begin(), values_.end());
  for (double v : values_) {
    if (!std::isfinite(v)) throw DataError("dataset contains non-finite value");
  }
  bool has_tie = false;
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (values_[i] == values_[i - 1]) has_tie = true;
  }
  if (has_tie) {
    if (tie_jitter <= 0.0) {
      throw DataError(
          "dataset contains tied values; set a positive tie jitter to admit "
          "discretized data");
    }
    std::size_t run = 0;
    for (std::size_t i = 1; i <= values_.size(); ++i) {
      if (i < values_.size() && values_[i] == values_[run]) continue;
      for (std::size_t j = run + 1; j < i; ++j) {
        values_[j] += static_cast<double>(j - run) * tie_jitter;
      }
      run = i;
    }
    std::sort(values_.begin(), values_.end());
    for (std::size_t i = 1; i < values_.size(); ++i) {
      if (values_[i] == values_[i - 1]) {
        throw DataError("tie jitter too small to separate tied values");
      }
    }
  }
}

Interval SortedDataset::interval(std::int64_t k) const {
  if (k < 0 || k > n()) throw Error("interval index out of range");
  Interval out;
  out.lo = (k == 0) ? -kInf : values_[k - 1];
  out.hi = (k == n()) ? kInf : values_[k];
  return out;
}

QuantileList::QuantileList(std::vector<double> quantiles) : qs(std::move(quantiles)) {
  if (qs.empty()) throw ConfigError("quantile list is empty");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (!(qs[i] > 0.0 && qs[i] < 1.0)) {
      throw ConfigError("quantiles must lie strictly inside (0, 1)");
    }
    if (i > 0 && qs[i] < qs[i - 1]) {
      throw ConfigError("quantiles must be ascending");
    }
  }
}

QuantileList QuantileList::Uniform(int m) {
  if (m < 1) throw ConfigError("need m >= 1 quantiles");
  std::vector<double> qs(m);
  for (int i = 1; i <= m; ++i) qs[i - 1] = static_cast<double>(i) / (m + 1);
  return QuantileList(std::move(qs));
}

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed), engine_(SplitMix64(seed)) {}

double RandomSource::Uniform() {
  // 53-bit mantissa draw in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomSource::Normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

double RandomSource::Gumbel() {
  double u = Uniform();
  while (u <= 0.0) u = Uniform();
  return -std::log(-std::log(u));
}

std::uint64_t RandomSource::Integer() { return engine_(); }

std::uint64_t RandomSource::SubSeed(std::uint64_t seed, std::uint64_t index) {
  return SplitMix64(SplitMix64(seed) ^ SplitMix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

RandomSource RandomSource::Split(std::uint64_t index) const {
  return RandomSource(SubSeed(seed_, index));
}

std::string RandomSource::SaveState() const {
  std::ostringstream out;
  out << seed_ << ' ' << engine_;
  return out.str();
}

void RandomSource::LoadState(const std::string& state) {
  std::istringstream in(state);
  in >> seed_ >> engine_;
  if (!in) throw ConfigError("malformed RandomSource state");
}

std::int64_t rank_index(double q, std::int64_t n) {
  return static_cast<std::int64_t>(std::floor(q * static_cast<double>(n) + kRankTolerance));
}

std::int64_t gap(const SortedDataset& x, double q, double o) {
  if (!(q > 0.0 && q < 1.0)) throw Error("gap requires q in (0, 1)");
  const auto& v = x.values();
  std::int64_t below = std::lower_bound(v.begin(), v.end(), o) - v.begin();
  return std::llabs(below - rank_index(q, x.n()));
}

Interval optimal_interval(const SortedDataset& x, double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error("optimal_interval requires q in (0, 1)");
  return x.interval(rank_index(q, x.n()));
}

std::pair<SortedDataset, std::int64_t> restrict_to(const SortedDataset& x,
                                                   double a, double b) {
  if (!(a < b)) throw Error("restrict_to requires a < b");
  const auto& v = x.values();
  auto lo = std::upper_bound(v.begin(), v.end(), a);
  auto hi = std::lower_bound(v.begin(), v.end(), b);
  if (hi < lo) hi = lo;
  SortedDataset sub(std::vector<double>(lo, hi), SortedDataset::AlreadySorted{});
  return {std::move(sub), lo - v.begin()};
}

double min_separation(const SortedDataset& x) {
  if (x.n() < 2) throw Error("min_separation undefined for n < 2");
  const auto& v = x.values();
  double best = kInf;
  for (std::size_t i = 1; i < v.size(); ++i) best = std::min(best, v[i] - v[i - 1]);
  return best;
}

std::int64_t max_gap(const SortedDataset& x, const QuantileList& qs,
                     const std::vector<double>& outputs) {
  if (outputs.size() != qs.qs.size()) {
    throw Error("max_gap: outputs and quantiles differ in length");
  }
  std::int64_t worst = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    worst = std::max(worst, gap(x, qs.qs[i], outputs[i]));
  }
  return worst;
}

}  // namespace dpq
