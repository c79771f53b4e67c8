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
#ifndef DPQ_LEARNING_H_
#define DPQ_LEARNING_H_

#include <cstdint>
#include <map>
#include <vector>

#include "dpq/core.h"
#include "json.hpp"

namespace dpq {

// Binary-tree mechanism releasing noisy prefix sums of a gradient stream.
// Gradients are clipped to l2-norm <= delta2 before insertion; per-node
// Gaussian noise (scale sigma * delta2 per coordinate) is drawn lazily from
// the owned RandomSource so replays are deterministic.
class TreeAggregator {
 public:
  TreeAggregator(std::int64_t capacity, double sigma, double delta2, int dim,
                 RandomSource rng);

  void Add(std::vector<double> grad);
  // Noisy prefix sum of the first t gradients; sums popcount(t) noisy nodes.
  std::vector<double> Sum(std::int64_t t);
  std::int64_t count() const { return count_; }
  int dim() const { return dim_; }
  // Number of noisy nodes Sum(t) touches: popcount(t).
  static int NoisyNodes(std::int64_t t);

  nlohmann::json Checkpoint() const;
  static TreeAggregator Restore(const nlohmann::json& j);

 private:
  std::int64_t capacity_;
  double sigma_;
  double delta2_;
  int dim_;
  std::int64_t count_ = 0;
  // levels_[l][i] covers leaves [i * 2^l + 1, (i + 1) * 2^l].
  std::vector<std::vector<std::vector<double>>> levels_;
  std::map<std::pair<int, std::int64_t>, std::vector<double>> noise_;
  RandomSource rng_;

  const std::vector<double>& NodeNoise(int level, std::int64_t index);
};

// sigma = (1/eps) * sqrt(2 * max(ceil(log2 T), 1) * log(1/delta)).
// Requires eps <= 2 log(1/delta).
double noise_scale(double eps, double delta, std::int64_t T);

// l2 sensitivity of the discrete-prior loss gradient:
// (d / gamma) * min{2, exp(eps_tilde) - 1}.
double sensitivity_discrete(int d, double gamma, double eps_tilde);

// Clamp entries up to gamma/d and renormalize the surplus over the rest,
// iterating until stable (at most d passes).
std::vector<double> floored_simplex_projection(std::vector<double> row, double gamma);

// DP-FTRL with the Euclidean regularizer over a box: the iterate is the
// projection of theta1 - eta .* Sum(t).
class FtrlBox {
 public:
  FtrlBox(std::vector<double> theta1, std::vector<double> eta,
          std::vector<double> lo, std::vector<double> hi, TreeAggregator agg);

  const std::vector<double>& Step(const std::vector<double>& grad);
  const std::vector<double>& iterate() const { return iterate_; }

  nlohmann::json Checkpoint() const;
  static FtrlBox Restore(const nlohmann::json& j);

 private:
  std::vector<double> theta1_, eta_, lo_, hi_, iterate_;
  TreeAggregator agg_;
};

// DP-FTRL with the entropic regularizer m<W, log W> over a product of
// gamma/d-floored simplices: per-row exponentiated-gradient update from the
// uniform start, then floored projection.
class FtrlEntropic {
 public:
  FtrlEntropic(int m, int d, double gamma, double eta, TreeAggregator agg);

  const std::vector<std::vector<double>>& Step(
      const std::vector<std::vector<double>>& grad);
  const std::vector<std::vector<double>>& iterate() const { return W_; }

  nlohmann::json Checkpoint() const;
  static FtrlEntropic Restore(const nlohmann::json& j);

 private:
  int m_, d_;
  double gamma_, eta_;
  std::vector<std::vector<double>> W_;
  TreeAggregator agg_;
};

// Coin-betting per-coordinate optimizer (the backprop-oriented variant with
// max-scale tracking), wealth parameter alpha = 100 by default.
class Cocob {
 public:
  explicit Cocob(std::vector<double> initial, double alpha = 100.0);

  const std::vector<double>& Step(const std::vector<double>& grad);
  const std::vector<double>& iterate() const { return w_; }

  nlohmann::json Checkpoint() const;
  static Cocob Restore(const nlohmann::json& j);

 private:
  double alpha_;
  std::vector<double> w1_, w_, scale_, grad_sum_, abs_sum_, reward_;
};

// Projected online gradient descent with per-coordinate step sizes; tracks
// the running average of iterates for online-to-batch conversion.
class Ogd {
 public:
  Ogd(std::vector<double> initial, std::vector<double> eta,
      std::vector<double> lo, std::vector<double> hi);

  const std::vector<double>& Step(const std::vector<double>& grad);
  const std::vector<double>& iterate() const { return w_; }
  std::vector<double> Average() const;

  nlohmann::json Checkpoint() const;
  static Ogd Restore(const nlohmann::json& j);

 private:
  std::vector<double> w_, eta_, lo_, hi_, sum_;
  std::int64_t steps_ = 0;
};

}  // namespace dpq

#endif  // DPQ_LEARNING_H_
