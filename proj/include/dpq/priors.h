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
#ifndef DPQ_PRIORS_H_
#define DPQ_PRIORS_H_

#include <memory>
#include <string>
#include <vector>

#include "dpq/core.h"
#include "json.hpp"

namespace dpq {

// Reparameterized Laplace coordinates (theta, phi) = (nu * phi, 1 / sigma),
// the coordinates in which the censored-regression loss is convex.
struct LocationScaleParams {
  double theta;
  double phi;
};

// Immutable base measure for the exponential mechanism. Families:
// uniform, cauchy, half_cauchy, laplace, piecewise, mixture, edge_adapted,
// truncated (the result of conditional adaptation on non-uniform bases).
class Prior {
 public:
  static Prior MakeUniform(double a, double b);
  static Prior MakeCauchy(double location, double scale);
  static Prior MakeHalfCauchy(double scale);
  static Prior MakeLaplace(double location, double scale);
  // Constant density per bin on (a, b): density in bin j is
  // weights[j] * d / (b - a); weights must be nonnegative and sum to 1.
  static Prior MakePiecewiseConstant(double a, double b,
                                     std::vector<double> weights);

  // Probability of the half-open interval (I.lo, I.hi], atoms included.
  double Mass(const Interval& I) const;
  // Right-continuous CDF; equals Mass((-inf, t]).
  double Cdf(double t) const;
  // Density of the continuous part at o (atoms excluded).
  double Density(double o) const;
  // Draw from the prior conditioned on I. Requires Mass(I) > 0.
  double SampleIn(const Interval& I, RandomSource& rng) const;

  // Renormalized restriction to [a_hat, b_hat]. Requires positive mass there.
  Prior AdaptConditional(double a_hat, double b_hat) const;
  // Moves outside mass to atoms at a_hat and b_hat, keeping the interior
  // density unchanged.
  Prior AdaptEdge(double a_hat, double b_hat) const;

  std::string FamilyTag() const;
  nlohmann::json ToJson() const;
  static Prior FromJson(const nlohmann::json& j);

  struct Node;  // implementation detail, defined in priors.cc

 private:
  explicit Prior(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;

  friend Prior mix(const Prior& predicted, const Prior& robust, double lambda);
};

// mu^(lambda) = (1 - lambda) * predicted + lambda * robust; interval masses
// combine exactly linearly.
Prior mix(const Prior& predicted, const Prior& robust, double lambda);

// Laplace(nu = theta / phi, sigma = 1 / phi). Requires phi > 0.
Prior laplace_from_params(const LocationScaleParams& pp);

}  // namespace dpq

#endif  // DPQ_PRIORS_H_
