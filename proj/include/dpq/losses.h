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
#ifndef DPQ_LOSSES_H_
#define DPQ_LOSSES_H_

#include <vector>

#include "dpq/core.h"
#include "dpq/priors.h"

namespace dpq {

struct PsiValue {
  double value;         // in [0, 1]
  bool eps_dependent;   // false = limit variant
  double eps;           // meaningful when eps_dependent
};

// eps variant: sum_k exp(-eps * gap(x,q,I_k) / 2) * mass(mu, I_k).
PsiValue psi_eps(const SortedDataset& x, double q, const Prior& mu, double eps);
// limit variant: mass of the optimal interval.
PsiValue psi_limit(const SortedDataset& x, double q, const Prior& mu);

// Harmonic-mean prediction loss U = log sum_i (1/Psi_i) - log m, computed as
// a stable log-sum-exp of the per-quantile U values. +inf when any Psi_i = 0.
double u_multi(const SortedDataset& x, const QuantileList& qs,
               const std::vector<Prior>& priors, bool eps_dependent, double eps);

// Censored Laplace negative log-likelihood of the interval (a, b] in the
// convex coordinates (theta, phi) = (nu * phi, 1 / sigma). Equals
// -log mass(Laplace(theta/phi, 1/phi), (a, b]). a may be -inf, b may be +inf
// (one-sided tail mass).
double laplace_loss(double a, double b, double theta, double phi);

struct LossGrad {
  double dtheta;
  double dphi;
};

LossGrad laplace_loss_grad(double a, double b, double theta, double phi);

// Box constraints for featurized location-scale parameters.
struct FeaturizedParams {
  std::vector<std::vector<double>> v;  // m x d
  std::vector<double> phi;             // m
  double B = 1.0;                      // per-coordinate bound on v
  double sigma_min = 0.1;
  double sigma_max = 10.0;
};

struct FeaturizedLoss {
  double loss;
  std::vector<std::vector<double>> dv;  // m x d
  std::vector<double> dphi;             // m
};

// LSE over quantiles of laplace_loss(a_i, b_i, <v_i, f>, phi_i) with the
// per-quantile optimal intervals of x; gradients via softmax weights.
FeaturizedLoss featurized_loss(const SortedDataset& x, const QuantileList& qs,
                               const std::vector<double>& f,
                               const FeaturizedParams& params);

// Same loss with caller-provided target intervals (one per quantile).
FeaturizedLoss featurized_loss_intervals(const std::vector<Interval>& targets,
                                         const std::vector<double>& f,
                                         const FeaturizedParams& params);

// Proxy loss for sequential release without data access: the censored loss
// of the centered interval (o_prev - g/2, o_prev + g/2].
double proxy_loss(double o_prev, double granularity, double theta, double phi);
LossGrad proxy_loss_grad(double o_prev, double granularity, double theta, double phi);

struct DiscreteLoss {
  double loss;
  std::vector<std::vector<double>> dW;      // m x d
  std::vector<std::vector<double>> scores;  // m x d, the EM-score integrals
};

// Piecewise-constant-prior loss log sum_i (1/m)/<s_i, W_i> with exact
// per-bin integration of exp(-eps_i * gap / 2) over the domain (a, b).
DiscreteLoss discrete_loss(const SortedDataset& x, const QuantileList& qs,
                           const std::vector<double>& eps_per_quantile,
                           const std::vector<std::vector<double>>& W, double a,
                           double b);

}  // namespace dpq

#endif  // DPQ_LOSSES_H_
