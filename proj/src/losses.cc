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
#include "dpq/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.69314718055994530942;

// 1 - exp(-s) * cosh(t), the Laplace mass of (a, b] scaled by exp(s), for
// 0 <= |t| <= s. Rearranged via expm1/sinh to avoid cancellation when the
// interval is narrow relative to the scale.
double InsideMassFactor(double s, double t) {
  if (s < 0.5) {
    double half = std::sinh(0.5 * t);
    return -std::expm1(-s) * std::cosh(t) - 2.0 * half * half;
  }
  return 1.0 - 0.5 * (std::exp(t - s) + std::exp(-t - s));
}

double LogSinh(double s) {
  if (s < 1.0) return std::log(std::sinh(s));
  return s - kLn2 + std::log1p(-std::exp(-2.0 * s));
}

void CheckLossArgs(double a, double b, double phi) {
  if (!(a < b)) throw Error("laplace_loss requires a < b");
  if (!(phi > 0.0)) throw Error("laplace_loss requires phi > 0");
}

double LogSumExp(const std::vector<double>& vals) {
  double top = -kInf;
  for (double v : vals) top = std::max(top, v);
  if (top == -kInf || top == kInf) return top;
  double acc = 0.0;
  for (double v : vals) acc += std::exp(v - top);
  return top + std::log(acc);
}

}  // namespace

PsiValue psi_eps(const SortedDataset& x, double q, const Prior& mu, double eps) {
  if (!(eps > 0.0)) throw Error("psi_eps requires eps > 0");
  const std::int64_t rank = rank_index(q, x.n());
  double total = 0.0;
  for (std::int64_t k = 0; k <= x.n(); ++k) {
    double g = static_cast<double>(std::llabs(k - rank));
    total += std::exp(-eps * g / 2.0) * mu.Mass(x.interval(k));
  }
  return PsiValue{total, true, eps};
}

PsiValue psi_limit(const SortedDataset& x, double q, const Prior& mu) {
  return PsiValue{mu.Mass(optimal_interval(x, q)), false, 0.0};
}

double u_multi(const SortedDataset& x, const QuantileList& qs,
               const std::vector<Prior>& priors, bool eps_dependent, double eps) {
  if (priors.size() != qs.qs.size()) {
    throw Error("u_multi: priors and quantiles differ in length");
  }
  std::vector<double> u_vals(priors.size());
  for (std::size_t i = 0; i < priors.size(); ++i) {
    double psi = eps_dependent ? psi_eps(x, qs.qs[i], priors[i], eps).value
                               : psi_limit(x, qs.qs[i], priors[i]).value;
    if (!(psi > 0.0)) return kInf;
    u_vals[i] = -std::log(psi);
  }
  return LogSumExp(u_vals) - std::log(static_cast<double>(u_vals.size()));
}

double laplace_loss(double a, double b, double theta, double phi) {
  CheckLossArgs(a, b, phi);
  const bool lo_inf = a == -kInf;
  const bool hi_inf = b == kInf;
  if (lo_inf && hi_inf) return 0.0;
  if (lo_inf || hi_inf) {
    // One-sided tail: -log F(b) or -log (1 - F(a)).
    double t = lo_inf ? theta - b * phi : a * phi - theta;
    if (t <= 0.0) return -std::log1p(-0.5 * std::exp(t));
    return kLn2 + t;
  }
  const double s = 0.5 * (b - a) * phi;
  const double t = theta - 0.5 * (a + b) * phi;
  if (std::fabs(t) <= s) return -std::log(InsideMassFactor(s, t));
  return std::fabs(t) - LogSinh(s);
}

LossGrad laplace_loss_grad(double a, double b, double theta, double phi) {
  CheckLossArgs(a, b, phi);
  const bool lo_inf = a == -kInf;
  const bool hi_inf = b == kInf;
  if (lo_inf && hi_inf) return {0.0, 0.0};
  if (lo_inf || hi_inf) {
    double edge = lo_inf ? b : a;
    double sign = lo_inf ? 1.0 : -1.0;  // d(t)/d(theta)
    double t = lo_inf ? theta - b * phi : a * phi - theta;
    double dt;
    if (t <= 0.0) {
      double e = 0.5 * std::exp(t);
      dt = e / (1.0 - e);
    } else {
      dt = 1.0;
    }
    return {sign * dt, -sign * edge * dt};
  }
  const double s = 0.5 * (b - a) * phi;
  const double t = theta - 0.5 * (a + b) * phi;
  double dloss_dt;
  double dloss_ds;
  if (std::fabs(t) <= s) {
    double u = InsideMassFactor(s, t);
    dloss_dt = std::exp(-s) * std::sinh(t) / u;
    dloss_ds = -std::exp(-s) * std::cosh(t) / u;
  } else {
    dloss_dt = t > 0.0 ? 1.0 : -1.0;
    dloss_ds = -std::cosh(s) / std::sinh(s);
  }
  double dtheta = dloss_dt;
  double dphi = dloss_ds * 0.5 * (b - a) - dloss_dt * 0.5 * (a + b);
  return {dtheta, dphi};
}

FeaturizedLoss featurized_loss_intervals(const std::vector<Interval>& targets,
                                         const std::vector<double>& f,
                                         const FeaturizedParams& params) {
  const std::size_t m = targets.size();
  if (params.v.size() != m || params.phi.size() != m) {
    throw Error("featurized loss: parameter shape does not match quantiles");
  }
  const std::size_t d = f.size();
  std::vector<double> losses(m);
  std::vector<LossGrad> grads(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (params.v[i].size() != d) {
      throw Error("featurized loss: feature dimension mismatch");
    }
    double theta = 0.0;
    for (std::size_t k = 0; k < d; ++k) theta += params.v[i][k] * f[k];
    losses[i] = laplace_loss(targets[i].lo, targets[i].hi, theta, params.phi[i]);
    grads[i] = laplace_loss_grad(targets[i].lo, targets[i].hi, theta, params.phi[i]);
  }
  double total = LogSumExp(losses);
  FeaturizedLoss out;
  out.loss = total;
  out.dv.assign(m, std::vector<double>(d, 0.0));
  out.dphi.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double w = std::exp(losses[i] - total);  // softmax over quantiles
    for (std::size_t k = 0; k < d; ++k) out.dv[i][k] = w * grads[i].dtheta * f[k];
    out.dphi[i] = w * grads[i].dphi;
  }
  return out;
}

FeaturizedLoss featurized_loss(const SortedDataset& x, const QuantileList& qs,
                               const std::vector<double>& f,
                               const FeaturizedParams& params) {
  std::vector<Interval> targets;
  targets.reserve(qs.qs.size());
  for (double q : qs.qs) targets.push_back(optimal_interval(x, q));
  return featurized_loss_intervals(targets, f, params);
}

double proxy_loss(double o_prev, double granularity, double theta, double phi) {
  if (!(granularity > 0.0)) throw Error("proxy_loss requires positive granularity");
  return laplace_loss(o_prev - granularity / 2.0, o_prev + granularity / 2.0, theta, phi);
}

LossGrad proxy_loss_grad(double o_prev, double granularity, double theta, double phi) {
  if (!(granularity > 0.0)) throw Error("proxy_loss requires positive granularity");
  return laplace_loss_grad(o_prev - granularity / 2.0, o_prev + granularity / 2.0,
                           theta, phi);
}

DiscreteLoss discrete_loss(const SortedDataset& x, const QuantileList& qs,
                           const std::vector<double>& eps_per_quantile,
                           const std::vector<std::vector<double>>& W, double a,
                           double b) {
  const std::size_t m = qs.qs.size();
  if (W.size() != m || eps_per_quantile.size() != m) {
    throw Error("discrete_loss: shape mismatch");
  }
  if (!(a < b)) throw Error("discrete_loss requires a < b");
  const std::size_t d = W[0].size();
  const double h = (b - a) / static_cast<double>(d);
  const auto& vals = x.values();

  DiscreteLoss out;
  out.scores.assign(m, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    if (W[i].size() != d) throw Error("discrete_loss: ragged W");
    const std::int64_t rank = rank_index(qs.qs[i], x.n());
    const double eps = eps_per_quantile[i];
    for (std::size_t j = 0; j < d; ++j) {
      double bin_lo = a + h * static_cast<double>(j);
      double bin_hi = j + 1 == d ? b : a + h * static_cast<double>(j + 1);
      // gap is piecewise constant between data points, so the bin integral
      // is a finite sum of exp * length terms.
      auto first = std::upper_bound(vals.begin(), vals.end(), bin_lo);
      double seg_lo = bin_lo;
      std::int64_t below = first - vals.begin();
      double acc = 0.0;
      for (auto it = first; it != vals.end() && *it < bin_hi; ++it, ++below) {
        acc += std::exp(-eps * static_cast<double>(std::llabs(below - rank)) / 2.0) *
               (*it - seg_lo);
        seg_lo = *it;
      }
      acc += std::exp(-eps * static_cast<double>(std::llabs(below - rank)) / 2.0) *
             (bin_hi - seg_lo);
      out.scores[i][j] = acc * static_cast<double>(d) / (b - a);
    }
  }

  std::vector<double> u_vals(m);
  std::vector<double> inner(m);
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += out.scores[i][j] * W[i][j];
    if (!(dot > 0.0)) throw Error("discrete_loss: zero score inner product");
    inner[i] = dot;
    u_vals[i] = -std::log(dot);
  }
  double total = LogSumExp(u_vals);
  out.loss = total - std::log(static_cast<double>(m));
  out.dW.assign(m, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    double w = std::exp(u_vals[i] - total);
    for (std::size_t j = 0; j < d; ++j) {
      out.dW[i][j] = -w * out.scores[i][j] / inner[i];
    }
  }
  return out;
}

}  // namespace dpq
