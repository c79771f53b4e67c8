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
#include "dpq/priors.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;
// Inverse-CDF arguments for the Cauchy tangent are kept this far away from
// +-pi/2 to avoid infinities at the tails.
constexpr double kTanClamp = 1e-12;

double ClampTan(double angle) {
  const double limit = kPi / 2 - kTanClamp;
  return std::min(std::max(angle, -limit), limit);
}
}  // namespace

struct Prior::Node {
  enum class Family {
    kUniform,
    kCauchy,
    kHalfCauchy,
    kLaplace,
    kPiecewise,
    kMixture,
    kEdgeAdapted,
    kTruncated,
  };

  Family family;
  double a = 0.0;         // uniform/piecewise support; edge/truncated bounds
  double b = 0.0;
  double location = 0.0;  // cauchy/laplace
  double scale = 1.0;     // cauchy/half-cauchy/laplace
  double lambda = 0.0;    // mixture weight on the robust component
  double atom_lo = 0.0;   // edge-adapted
  double atom_hi = 0.0;
  std::vector<double> weights;                 // piecewise
  std::shared_ptr<const Node> first;           // mixture: predicted; else base
  std::shared_ptr<const Node> second;          // mixture: robust
};

namespace {

using Node = Prior::Node;
using Family = Node::Family;

double NodeCdf(const Node& n, double t);

double NodeCdfExt(const Node& n, double t) {
  if (t == -kInf) return 0.0;
  if (t == kInf) return 1.0;
  return NodeCdf(n, t);
}

double NodeMass(const Node& n, const Interval& I);

double NodeCdf(const Node& n, double t) {
  switch (n.family) {
    case Family::kUniform:
      if (t <= n.a) return 0.0;
      if (t >= n.b) return 1.0;
      return (t - n.a) / (n.b - n.a);
    case Family::kCauchy:
      return 0.5 + std::atan((t - n.location) / n.scale) / kPi;
    case Family::kHalfCauchy:
      if (t <= 0.0) return 0.0;
      return 2.0 / kPi * std::atan(t / n.scale);
    case Family::kLaplace: {
      double z = (t - n.location) / n.scale;
      return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
    }
    case Family::kPiecewise: {
      if (t <= n.a) return 0.0;
      if (t >= n.b) return 1.0;
      const std::size_t d = n.weights.size();
      const double h = (n.b - n.a) / static_cast<double>(d);
      double pos = (t - n.a) / h;
      auto full = static_cast<std::size_t>(pos);
      if (full >= d) full = d - 1;
      double acc = 0.0;
      for (std::size_t j = 0; j < full; ++j) acc += n.weights[j];
      acc += n.weights[full] * (pos - static_cast<double>(full));
      return acc;
    }
    case Family::kMixture:
      return (1.0 - n.lambda) * NodeCdf(*n.first, t) +
             n.lambda * NodeCdf(*n.second, t);
    case Family::kEdgeAdapted:
      if (t < n.a) return 0.0;
      if (t >= n.b) return 1.0;
      return n.atom_lo + (NodeCdfExt(*n.first, t) - NodeCdfExt(*n.first, n.a));
    case Family::kTruncated: {
      if (t <= n.a) return 0.0;
      if (t >= n.b) return 1.0;
      double flo = NodeCdfExt(*n.first, n.a);
      double z = NodeCdfExt(*n.first, n.b) - flo;
      return (NodeCdf(*n.first, t) - flo) / z;
    }
  }
  throw Error("unreachable prior family");
}

double NodeMass(const Node& n, const Interval& I) {
  if (!(I.lo < I.hi)) return 0.0;
  switch (n.family) {
    case Family::kMixture:
      // Exact linearity: combine child masses, never CDF differences.
      return (1.0 - n.lambda) * NodeMass(*n.first, I) +
             n.lambda * NodeMass(*n.second, I);
    case Family::kEdgeAdapted: {
      double total = 0.0;
      if (I.contains(n.a)) total += n.atom_lo;
      if (I.contains(n.b)) total += n.atom_hi;
      Interval interior{std::max(I.lo, n.a), std::min(I.hi, n.b)};
      if (interior.lo < interior.hi) total += NodeMass(*n.first, interior);
      return total;
    }
    default: {
      double m = NodeCdfExt(n, I.hi) - NodeCdfExt(n, I.lo);
      return std::max(m, 0.0);
    }
  }
}

double NodeDensity(const Node& n, double o) {
  switch (n.family) {
    case Family::kUniform:
      return (o > n.a && o < n.b) ? 1.0 / (n.b - n.a) : 0.0;
    case Family::kCauchy: {
      double z = (o - n.location) / n.scale;
      return 1.0 / (kPi * n.scale * (1.0 + z * z));
    }
    case Family::kHalfCauchy: {
      if (o < 0.0) return 0.0;
      double z = o / n.scale;
      return 2.0 / (kPi * n.scale * (1.0 + z * z));
    }
    case Family::kLaplace: {
      double z = (o - n.location) / n.scale;
      return std::exp(-std::fabs(z)) / (2.0 * n.scale);
    }
    case Family::kPiecewise: {
      if (o <= n.a || o >= n.b) return 0.0;
      const std::size_t d = n.weights.size();
      const double h = (n.b - n.a) / static_cast<double>(d);
      auto j = static_cast<std::size_t>((o - n.a) / h);
      if (j >= d) j = d - 1;
      return n.weights[j] / h;
    }
    case Family::kMixture:
      return (1.0 - n.lambda) * NodeDensity(*n.first, o) +
             n.lambda * NodeDensity(*n.second, o);
    case Family::kEdgeAdapted:
      return (o > n.a && o < n.b) ? NodeDensity(*n.first, o) : 0.0;
    case Family::kTruncated: {
      if (o <= n.a || o >= n.b) return 0.0;
      double z = NodeCdfExt(*n.first, n.b) - NodeCdfExt(*n.first, n.a);
      return NodeDensity(*n.first, o) / z;
    }
  }
  throw Error("unreachable prior family");
}

// Inverse CDF for the closed-form leaf families.
double NodeIcdf(const Node& n, double p) {
  p = std::min(std::max(p, 0.0), 1.0);
  switch (n.family) {
    case Family::kUniform:
      return n.a + p * (n.b - n.a);
    case Family::kCauchy:
      return n.location + n.scale * std::tan(ClampTan(kPi * (p - 0.5)));
    case Family::kHalfCauchy:
      return n.scale * std::tan(ClampTan(kPi * p / 2.0));
    case Family::kLaplace: {
      const double tiny = 1e-300;
      if (p < 0.5) return n.location + n.scale * std::log(2.0 * std::max(p, tiny));
      return n.location - n.scale * std::log(2.0 * std::max(1.0 - p, tiny));
    }
    case Family::kPiecewise: {
      const std::size_t d = n.weights.size();
      const double h = (n.b - n.a) / static_cast<double>(d);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (acc + n.weights[j] >= p && n.weights[j] > 0.0) {
          return n.a + h * (static_cast<double>(j) + (p - acc) / n.weights[j]);
        }
        acc += n.weights[j];
      }
      return n.b;
    }
    default:
      throw Error("inverse CDF only defined for leaf families");
  }
}

double NodeSampleIn(const Node& n, const Interval& I, RandomSource& rng) {
  double total = NodeMass(n, I);
  if (!(total > 0.0)) throw Error("sampling from a zero-mass interval");
  switch (n.family) {
    case Family::kMixture: {
      double w_pred = (1.0 - n.lambda) * NodeMass(*n.first, I);
      double pick = rng.Uniform() * total;
      if (pick < w_pred) return NodeSampleIn(*n.first, I, rng);
      return NodeSampleIn(*n.second, I, rng);
    }
    case Family::kEdgeAdapted: {
      double w_lo = I.contains(n.a) ? n.atom_lo : 0.0;
      double w_hi = I.contains(n.b) ? n.atom_hi : 0.0;
      double pick = rng.Uniform() * total;
      if (pick < w_lo) return n.a;
      if (pick < w_lo + w_hi) return n.b;
      Interval interior{std::max(I.lo, n.a), std::min(I.hi, n.b)};
      return NodeSampleIn(*n.first, interior, rng);
    }
    case Family::kTruncated: {
      Interval inner{std::max(I.lo, n.a), std::min(I.hi, n.b)};
      return NodeSampleIn(*n.first, inner, rng);
    }
    default: {
      double plo = NodeCdfExt(n, I.lo);
      double phi = NodeCdfExt(n, I.hi);
      double o = NodeIcdf(n, plo + rng.Uniform() * (phi - plo));
      // Guard against round-off pushing the draw just outside I.
      if (o > I.hi) o = I.hi;
      if (o <= I.lo) o = std::nextafter(I.lo, kInf);
      return o;
    }
  }
}

nlohmann::json NodeToJson(const Node& n) {
  nlohmann::json j;
  switch (n.family) {
    case Family::kUniform:
      j = {{"family", "uniform"}, {"a", n.a}, {"b", n.b}};
      break;
    case Family::kCauchy:
      j = {{"family", "cauchy"}, {"location", n.location}, {"scale", n.scale}};
      break;
    case Family::kHalfCauchy:
      j = {{"family", "half_cauchy"}, {"scale", n.scale}};
      break;
    case Family::kLaplace:
      j = {{"family", "laplace"}, {"location", n.location}, {"scale", n.scale}};
      break;
    case Family::kPiecewise:
      j = {{"family", "piecewise"}, {"a", n.a}, {"b", n.b}, {"weights", n.weights}};
      break;
    case Family::kMixture:
      j = {{"family", "mixture"},
           {"lambda", n.lambda},
           {"predicted", NodeToJson(*n.first)},
           {"robust", NodeToJson(*n.second)}};
      break;
    case Family::kEdgeAdapted:
      j = {{"family", "edge_adapted"},
           {"base", NodeToJson(*n.first)},
           {"lo", n.a},
           {"hi", n.b},
           {"atom_lo", n.atom_lo},
           {"atom_hi", n.atom_hi}};
      break;
    case Family::kTruncated:
      j = {{"family", "truncated"}, {"base", NodeToJson(*n.first)}, {"lo", n.a}, {"hi", n.b}};
      break;
  }
  return j;
}

const char* FamilyName(Family f) {
  switch (f) {
    case Family::kUniform: return "uniform";
    case Family::kCauchy: return "cauchy";
    case Family::kHalfCauchy: return "half_cauchy";
    case Family::kLaplace: return "laplace";
    case Family::kPiecewise: return "piecewise";
    case Family::kMixture: return "mixture";
    case Family::kEdgeAdapted: return "edge_adapted";
    case Family::kTruncated: return "truncated";
  }
  return "?";
}

std::shared_ptr<const Node> NodeFromJson(const nlohmann::json& j);

std::shared_ptr<Node> NewNode(Family f) {
  auto n = std::make_shared<Node>();
  n->family = f;
  return n;
}

std::shared_ptr<const Node> NodeFromJson(const nlohmann::json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "uniform") {
    auto n = NewNode(Family::kUniform);
    n->a = j.at("a").get<double>();
    n->b = j.at("b").get<double>();
    if (!(n->a < n->b)) throw ConfigError("uniform prior requires a < b");
    return n;
  }
  if (family == "cauchy" || family == "laplace") {
    auto n = NewNode(family == "cauchy" ? Family::kCauchy : Family::kLaplace);
    n->location = j.at("location").get<double>();
    n->scale = j.at("scale").get<double>();
    if (!(n->scale > 0.0)) throw ConfigError("prior scale must be positive");
    return n;
  }
  if (family == "half_cauchy") {
    auto n = NewNode(Family::kHalfCauchy);
    n->scale = j.at("scale").get<double>();
    if (!(n->scale > 0.0)) throw ConfigError("prior scale must be positive");
    return n;
  }
  if (family == "piecewise") {
    auto n = NewNode(Family::kPiecewise);
    n->a = j.at("a").get<double>();
    n->b = j.at("b").get<double>();
    n->weights = j.at("weights").get<std::vector<double>>();
    if (!(n->a < n->b)) throw ConfigError("piecewise prior requires a < b");
    if (n->weights.empty()) throw ConfigError("piecewise prior needs weights");
    double sum = 0.0;
    for (double w : n->weights) {
      if (w < 0.0) throw ConfigError("piecewise weights must be nonnegative");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw ConfigError("piecewise weights must sum to 1");
    }
    return n;
  }
  if (family == "mixture") {
    auto n = NewNode(Family::kMixture);
    n->lambda = j.at("lambda").get<double>();
    if (!(n->lambda >= 0.0 && n->lambda <= 1.0)) {
      throw ConfigError("mixture lambda must lie in [0, 1]");
    }
    n->first = NodeFromJson(j.at("predicted"));
    n->second = NodeFromJson(j.at("robust"));
    return n;
  }
  if (family == "edge_adapted") {
    auto n = NewNode(Family::kEdgeAdapted);
    n->first = NodeFromJson(j.at("base"));
    n->a = j.at("lo").get<double>();
    n->b = j.at("hi").get<double>();
    n->atom_lo = j.at("atom_lo").get<double>();
    n->atom_hi = j.at("atom_hi").get<double>();
    if (!(n->a < n->b)) throw ConfigError("edge adaptation requires lo < hi");
    return n;
  }
  if (family == "truncated") {
    auto n = NewNode(Family::kTruncated);
    n->first = NodeFromJson(j.at("base"));
    n->a = j.at("lo").get<double>();
    n->b = j.at("hi").get<double>();
    if (!(n->a < n->b)) throw ConfigError("truncation requires lo < hi");
    return n;
  }
  throw ConfigError("unknown prior family: " + family);
}

}  // namespace

Prior Prior::MakeUniform(double a, double b) {
  if (!(a < b)) throw ConfigError("uniform prior requires a < b");
  auto n = NewNode(Family::kUniform);
  n->a = a;
  n->b = b;
  return Prior(n);
}

Prior Prior::MakeCauchy(double location, double scale) {
  if (!(scale > 0.0)) throw ConfigError("Cauchy scale must be positive");
  auto n = NewNode(Family::kCauchy);
  n->location = location;
  n->scale = scale;
  return Prior(n);
}

Prior Prior::MakeHalfCauchy(double scale) {
  if (!(scale > 0.0)) throw ConfigError("half-Cauchy scale must be positive");
  auto n = NewNode(Family::kHalfCauchy);
  n->scale = scale;
  return Prior(n);
}

Prior Prior::MakeLaplace(double location, double scale) {
  if (!(scale > 0.0)) throw ConfigError("Laplace scale must be positive");
  auto n = NewNode(Family::kLaplace);
  n->location = location;
  n->scale = scale;
  return Prior(n);
}

Prior Prior::MakePiecewiseConstant(double a, double b, std::vector<double> weights) {
  nlohmann::json j = {{"family", "piecewise"}, {"a", a}, {"b", b}, {"weights", weights}};
  return Prior(NodeFromJson(j));
}

double Prior::Mass(const Interval& I) const { return NodeMass(*node_, I); }

double Prior::Cdf(double t) const { return NodeCdfExt(*node_, t); }

double Prior::Density(double o) const { return NodeDensity(*node_, o); }

double Prior::SampleIn(const Interval& I, RandomSource& rng) const {
  return NodeSampleIn(*node_, I, rng);
}

Prior Prior::AdaptConditional(double a_hat, double b_hat) const {
  if (!(a_hat < b_hat)) throw Error("conditional adaptation requires lo < hi");
  if (a_hat == -kInf && b_hat == kInf) return *this;
  double z = NodeCdfExt(*node_, b_hat) - NodeCdfExt(*node_, a_hat);
  if (!(z > 0.0)) throw Error("conditional adaptation: zero mass on the interval");
  if (node_->family == Family::kUniform) {
    return MakeUniform(std::max(node_->a, a_hat), std::min(node_->b, b_hat));
  }
  auto n = NewNode(Family::kTruncated);
  n->first = node_;
  n->a = a_hat;
  n->b = b_hat;
  return Prior(n);
}

Prior Prior::AdaptEdge(double a_hat, double b_hat) const {
  if (!(a_hat < b_hat)) throw Error("edge adaptation requires lo < hi");
  if (a_hat == -kInf && b_hat == kInf) return *this;
  auto n = NewNode(Family::kEdgeAdapted);
  n->first = node_;
  n->a = a_hat;
  n->b = b_hat;
  n->atom_lo = NodeCdfExt(*node_, a_hat);
  n->atom_hi = 1.0 - NodeCdfExt(*node_, b_hat);
  return Prior(n);
}

std::string Prior::FamilyTag() const { return FamilyName(node_->family); }

nlohmann::json Prior::ToJson() const { return NodeToJson(*node_); }

Prior Prior::FromJson(const nlohmann::json& j) { return Prior(NodeFromJson(j)); }

Prior mix(const Prior& predicted, const Prior& robust, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("mixture lambda must lie in [0, 1]");
  }
  auto n = NewNode(Family::kMixture);
  n->lambda = lambda;
  n->first = predicted.node_;
  n->second = robust.node_;
  return Prior(n);
}

Prior laplace_from_params(const LocationScaleParams& pp) {
  if (!(pp.phi > 0.0)) throw ConfigError("phi must be positive");
  return Prior::MakeLaplace(pp.theta / pp.phi, 1.0 / pp.phi);
}

}  // namespace dpq
