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
#include "dpq/learning.h"

#include <algorithm>
#include <cmath>

namespace dpq {

namespace {

std::int64_t NextPow2(std::int64_t v) {
  std::int64_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

int CeilLog2(std::int64_t v) {
  int l = 0;
  std::int64_t reach = 1;
  while (reach < v) {
    reach <<= 1;
    ++l;
  }
  return l;
}

void CheckFinite(const std::vector<double>& grad) {
  for (double g : grad) {
    if (!std::isfinite(g)) throw Error("non-finite gradient rejected");
  }
}

std::vector<double> Clamp(std::vector<double> v, const std::vector<double>& lo,
                          const std::vector<double>& hi) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::min(std::max(v[i], lo[i]), hi[i]);
  }
  return v;
}

}  // namespace

TreeAggregator::TreeAggregator(std::int64_t capacity, double sigma, double delta2,
                               int dim, RandomSource rng)
    : capacity_(NextPow2(std::max<std::int64_t>(capacity, 1))),
      sigma_(sigma),
      delta2_(delta2),
      dim_(dim),
      rng_(rng) {
  if (dim < 1) throw ConfigError("tree aggregator needs dim >= 1");
  if (sigma < 0.0 || delta2 < 0.0) throw ConfigError("negative noise parameters");
  int top = CeilLog2(capacity_);
  levels_.resize(top + 1);
  for (int l = 0; l <= top; ++l) {
    levels_[l].assign(capacity_ >> l, std::vector<double>(dim_, 0.0));
  }
}

void TreeAggregator::Add(std::vector<double> grad) {
  CheckFinite(grad);
  if (static_cast<int>(grad.size()) != dim_) throw Error("gradient dimension mismatch");
  if (count_ >= capacity_) throw Error("tree aggregator capacity exceeded");
  double norm2 = 0.0;
  for (double g : grad) norm2 += g * g;
  double norm = std::sqrt(norm2);
  if (norm > delta2_ && norm > 0.0) {
    double scale = delta2_ / norm;
    for (double& g : grad) g *= scale;
  }
  const std::int64_t t = count_++;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    auto& node = levels_[l][t >> l];
    for (int k = 0; k < dim_; ++k) node[k] += grad[k];
  }
}

const std::vector<double>& TreeAggregator::NodeNoise(int level, std::int64_t index) {
  auto key = std::make_pair(level, index);
  auto it = noise_.find(key);
  if (it != noise_.end()) return it->second;
  std::vector<double> n(dim_, 0.0);
  if (sigma_ > 0.0) {
    for (int k = 0; k < dim_; ++k) n[k] = sigma_ * delta2_ * rng_.Normal();
  }
  return noise_.emplace(key, std::move(n)).first->second;
}

std::vector<double> TreeAggregator::Sum(std::int64_t t) {
  if (t < 0 || t > count_) throw Error("prefix length out of range");
  std::vector<double> acc(dim_, 0.0);
  std::int64_t pos = 0;
  // Dyadic decomposition of [1, t], widest node first (fixed order).
  for (int l = static_cast<int>(levels_.size()) - 1; l >= 0; --l) {
    if ((t - pos) >= (std::int64_t{1} << l)) {
      std::int64_t index = pos >> l;
      const auto& node = levels_[l][index];
      const auto& noise = NodeNoise(l, index);
      for (int k = 0; k < dim_; ++k) acc[k] += node[k] + noise[k];
      pos += std::int64_t{1} << l;
    }
  }
  return acc;
}

int TreeAggregator::NoisyNodes(std::int64_t t) {
  int c = 0;
  while (t > 0) {
    c += static_cast<int>(t & 1);
    t >>= 1;
  }
  return c;
}

nlohmann::json TreeAggregator::Checkpoint() const {
  nlohmann::json j;
  j["capacity"] = capacity_;
  j["sigma"] = sigma_;
  j["delta2"] = delta2_;
  j["dim"] = dim_;
  j["count"] = count_;
  j["levels"] = levels_;
  j["rng"] = rng_.SaveState();
  nlohmann::json noise = nlohmann::json::array();
  for (const auto& [key, vec] : noise_) {
    noise.push_back({{"level", key.first}, {"index", key.second}, {"value", vec}});
  }
  j["noise"] = noise;
  return j;
}

TreeAggregator TreeAggregator::Restore(const nlohmann::json& j) {
  TreeAggregator agg(j.at("capacity").get<std::int64_t>(), j.at("sigma").get<double>(),
                     j.at("delta2").get<double>(), j.at("dim").get<int>(),
                     RandomSource(0));
  agg.count_ = j.at("count").get<std::int64_t>();
  agg.levels_ = j.at("levels").get<std::vector<std::vector<std::vector<double>>>>();
  agg.rng_.LoadState(j.at("rng").get<std::string>());
  for (const auto& item : j.at("noise")) {
    agg.noise_[{item.at("level").get<int>(), item.at("index").get<std::int64_t>()}] =
        item.at("value").get<std::vector<double>>();
  }
  return agg;
}

double noise_scale(double eps, double delta, std::int64_t T) {
  if (!(eps > 0.0) || !(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("noise_scale requires eps > 0 and delta in (0, 1)");
  }
  double log_inv_delta = std::log(1.0 / delta);
  if (eps > 2.0 * log_inv_delta) {
    throw ConfigError("noise_scale requires eps <= 2 log(1/delta)");
  }
  int depth = std::max(CeilLog2(std::max<std::int64_t>(T, 1)), 1);
  return std::sqrt(2.0 * depth * log_inv_delta) / eps;
}

double sensitivity_discrete(int d, double gamma, double eps_tilde) {
  if (d < 1 || !(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("sensitivity_discrete requires d >= 1, gamma in (0, 1]");
  }
  return static_cast<double>(d) / gamma * std::min(2.0, std::expm1(eps_tilde));
}

std::vector<double> floored_simplex_projection(std::vector<double> row, double gamma) {
  const std::size_t d = row.size();
  if (d == 0) throw Error("empty simplex row");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  const double floor = gamma / static_cast<double>(d);
  std::vector<bool> clamped(d, false);
  for (std::size_t pass = 0; pass < d; ++pass) {
    double free_mass = 0.0;
    std::size_t n_clamped = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (clamped[i]) {
        ++n_clamped;
      } else {
        free_mass += row[i];
      }
    }
    double target = 1.0 - floor * static_cast<double>(n_clamped);
    bool changed = false;
    if (free_mass <= 0.0) {
      for (std::size_t i = 0; i < d; ++i) {
        if (!clamped[i]) row[i] = target / static_cast<double>(d - n_clamped);
      }
    } else {
      double scale = target / free_mass;
      for (std::size_t i = 0; i < d; ++i) {
        if (!clamped[i]) row[i] *= scale;
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      if (!clamped[i] && row[i] < floor) {
        clamped[i] = true;
        row[i] = floor;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (std::size_t i = 0; i < d; ++i) row[i] = std::max(row[i], floor);
  return row;
}

FtrlBox::FtrlBox(std::vector<double> theta1, std::vector<double> eta,
                 std::vector<double> lo, std::vector<double> hi, TreeAggregator agg)
    : theta1_(std::move(theta1)),
      eta_(std::move(eta)),
      lo_(std::move(lo)),
      hi_(std::move(hi)),
      agg_(std::move(agg)) {
  if (theta1_.size() != eta_.size() || lo_.size() != hi_.size() ||
      theta1_.size() != lo_.size() ||
      static_cast<int>(theta1_.size()) != agg_.dim()) {
    throw ConfigError("FtrlBox: dimension mismatch");
  }
  iterate_ = Clamp(theta1_, lo_, hi_);
}

const std::vector<double>& FtrlBox::Step(const std::vector<double>& grad) {
  agg_.Add(grad);
  std::vector<double> s = agg_.Sum(agg_.count());
  std::vector<double> next(theta1_.size());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] = theta1_[i] - eta_[i] * s[i];
  iterate_ = Clamp(std::move(next), lo_, hi_);
  return iterate_;
}

nlohmann::json FtrlBox::Checkpoint() const {
  return {{"theta1", theta1_}, {"eta", eta_},     {"lo", lo_},
          {"hi", hi_},         {"iterate", iterate_}, {"agg", agg_.Checkpoint()}};
}

FtrlBox FtrlBox::Restore(const nlohmann::json& j) {
  FtrlBox out(j.at("theta1").get<std::vector<double>>(),
              j.at("eta").get<std::vector<double>>(),
              j.at("lo").get<std::vector<double>>(),
              j.at("hi").get<std::vector<double>>(),
              TreeAggregator::Restore(j.at("agg")));
  out.iterate_ = j.at("iterate").get<std::vector<double>>();
  return out;
}

FtrlEntropic::FtrlEntropic(int m, int d, double gamma, double eta, TreeAggregator agg)
    : m_(m), d_(d), gamma_(gamma), eta_(eta), agg_(std::move(agg)) {
  if (m < 1 || d < 1) throw ConfigError("FtrlEntropic: need m, d >= 1");
  if (agg_.dim() != m * d) throw ConfigError("FtrlEntropic: aggregator dim mismatch");
  W_.assign(m_, std::vector<double>(d_, 1.0 / static_cast<double>(d_)));
}

const std::vector<std::vector<double>>& FtrlEntropic::Step(
    const std::vector<std::vector<double>>& grad) {
  std::vector<double> flat;
  flat.reserve(m_ * d_);
  for (const auto& row : grad) {
    if (static_cast<int>(row.size()) != d_) throw Error("FtrlEntropic: ragged gradient");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  agg_.Add(flat);
  std::vector<double> G = agg_.Sum(agg_.count());
  for (int i = 0; i < m_; ++i) {
    double low = G[i * d_];
    for (int k = 1; k < d_; ++k) low = std::min(low, G[i * d_ + k]);
    std::vector<double> row(d_);
    double z = 0.0;
    for (int k = 0; k < d_; ++k) {
      row[k] = std::exp(-eta_ / static_cast<double>(m_) * (G[i * d_ + k] - low));
      z += row[k];
    }
    for (int k = 0; k < d_; ++k) row[k] /= z;
    W_[i] = floored_simplex_projection(std::move(row), gamma_);
  }
  return W_;
}

nlohmann::json FtrlEntropic::Checkpoint() const {
  return {{"m", m_},     {"d", d_}, {"gamma", gamma_},
          {"eta", eta_}, {"W", W_}, {"agg", agg_.Checkpoint()}};
}

FtrlEntropic FtrlEntropic::Restore(const nlohmann::json& j) {
  FtrlEntropic out(j.at("m").get<int>(), j.at("d").get<int>(),
                   j.at("gamma").get<double>(), j.at("eta").get<double>(),
                   TreeAggregator::Restore(j.at("agg")));
  out.W_ = j.at("W").get<std::vector<std::vector<double>>>();
  return out;
}

Cocob::Cocob(std::vector<double> initial, double alpha)
    : alpha_(alpha), w1_(initial), w_(std::move(initial)) {
  if (!(alpha_ > 0.0)) throw ConfigError("Cocob wealth alpha must be positive");
  scale_.assign(w_.size(), 0.0);
  grad_sum_.assign(w_.size(), 0.0);
  abs_sum_.assign(w_.size(), 0.0);
  reward_.assign(w_.size(), 0.0);
}

const std::vector<double>& Cocob::Step(const std::vector<double>& grad) {
  if (grad.size() != w_.size()) throw Error("Cocob: gradient dimension mismatch");
  CheckFinite(grad);
  for (std::size_t i = 0; i < w_.size(); ++i) {
    double g = grad[i];
    scale_[i] = std::max(scale_[i], std::fabs(g));
    abs_sum_[i] += std::fabs(g);
    reward_[i] = std::max(reward_[i] - (w_[i] - w1_[i]) * g, 0.0);
    grad_sum_[i] -= g;
    if (scale_[i] > 0.0) {
      double denom = scale_[i] * std::max(abs_sum_[i] + scale_[i], alpha_ * scale_[i]);
      w_[i] = w1_[i] + grad_sum_[i] / denom * (scale_[i] + reward_[i]);
    }
  }
  return w_;
}

nlohmann::json Cocob::Checkpoint() const {
  return {{"alpha", alpha_},        {"w1", w1_},
          {"w", w_},                {"scale", scale_},
          {"grad_sum", grad_sum_},  {"abs_sum", abs_sum_},
          {"reward", reward_}};
}

Cocob Cocob::Restore(const nlohmann::json& j) {
  Cocob out(j.at("w1").get<std::vector<double>>(), j.at("alpha").get<double>());
  out.w_ = j.at("w").get<std::vector<double>>();
  out.scale_ = j.at("scale").get<std::vector<double>>();
  out.grad_sum_ = j.at("grad_sum").get<std::vector<double>>();
  out.abs_sum_ = j.at("abs_sum").get<std::vector<double>>();
  out.reward_ = j.at("reward").get<std::vector<double>>();
  return out;
}

Ogd::Ogd(std::vector<double> initial, std::vector<double> eta, std::vector<double> lo,
         std::vector<double> hi)
    : w_(std::move(initial)), eta_(std::move(eta)), lo_(std::move(lo)), hi_(std::move(hi)) {
  if (w_.size() != eta_.size() || w_.size() != lo_.size() || lo_.size() != hi_.size()) {
    throw ConfigError("Ogd: dimension mismatch");
  }
  w_ = Clamp(std::move(w_), lo_, hi_);
  sum_.assign(w_.size(), 0.0);
}

const std::vector<double>& Ogd::Step(const std::vector<double>& grad) {
  if (grad.size() != w_.size()) throw Error("Ogd: gradient dimension mismatch");
  CheckFinite(grad);
  for (std::size_t i = 0; i < w_.size(); ++i) w_[i] -= eta_[i] * grad[i];
  w_ = Clamp(std::move(w_), lo_, hi_);
  for (std::size_t i = 0; i < w_.size(); ++i) sum_[i] += w_[i];
  ++steps_;
  return w_;
}

std::vector<double> Ogd::Average() const {
  if (steps_ == 0) return w_;
  std::vector<double> avg(sum_.size());
  for (std::size_t i = 0; i < avg.size(); ++i) {
    avg[i] = sum_[i] / static_cast<double>(steps_);
  }
  return avg;
}

nlohmann::json Ogd::Checkpoint() const {
  return {{"w", w_},   {"eta", eta_},  {"lo", lo_},
          {"hi", hi_}, {"sum", sum_},  {"steps", steps_}};
}

Ogd Ogd::Restore(const nlohmann::json& j) {
  Ogd out(j.at("w").get<std::vector<double>>(), j.at("eta").get<std::vector<double>>(),
          j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>());
  out.sum_ = j.at("sum").get<std::vector<double>>();
  out.steps_ = j.at("steps").get<std::int64_t>();
  return out;
}

}  // namespace dpq
