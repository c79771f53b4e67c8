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
#include "dpq/pipelines.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

namespace dpq {

namespace {

const std::vector<std::string>& RegisteredMethods() {
  static const std::vector<std::string> kMethods = {
      "uniform",          "cauchy",   "pubfit",  "pubfit-robust",
      "public-quantiles", "public-cauchy",
      "static-uniform",   "static-cauchy", "static-halfcauchy",
      "pubprox",          "pubprev",  "dpftrl",  "nonprivate"};
  return kMethods;
}

bool IsRegisteredMethod(const std::string& name) {
  const auto& reg = RegisteredMethods();
  return std::find(reg.begin(), reg.end(), name) != reg.end();
}

int PoissonDraw(double lambda, RandomSource& rng) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.Uniform();
  } while (p > limit);
  return k - 1;
}

double Clamp(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

std::string FormatDouble(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

// Flat layout for location-scale parameters with d features:
// [v_0 .. v_{m-1} row-major | phi_0 .. phi_{m-1}].
struct FlatParams {
  int m;
  int d;

  std::size_t size() const { return static_cast<std::size_t>(m) * d + m; }

  FeaturizedParams Unpack(const std::vector<double>& flat,
                          const ExperimentConfig& cfg) const {
    FeaturizedParams p;
    p.B = cfg.B;
    p.sigma_min = cfg.sigma_min;
    p.sigma_max = cfg.sigma_max;
    p.v.assign(m, std::vector<double>(d, 0.0));
    p.phi.assign(m, 0.0);
    const double phi_lo = 1.0 / cfg.sigma_max;
    const double phi_hi = 1.0 / cfg.sigma_min;
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < d; ++k) {
        p.v[i][k] = Clamp(flat[static_cast<std::size_t>(i) * d + k], -cfg.B, cfg.B);
      }
      p.phi[i] = Clamp(flat[static_cast<std::size_t>(m) * d + i], phi_lo, phi_hi);
    }
    return p;
  }

  std::vector<double> PackGrad(const FeaturizedLoss& fl) const {
    std::vector<double> g(size(), 0.0);
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < d; ++k) g[static_cast<std::size_t>(i) * d + k] = fl.dv[i][k];
      g[static_cast<std::size_t>(m) * d + i] = fl.dphi[i];
    }
    return g;
  }

  std::vector<double> InitialFlat(const ExperimentConfig& cfg) const {
    std::vector<double> flat(size(), 0.0);
    const double phi0 = Clamp(1.0, 1.0 / cfg.sigma_max, 1.0 / cfg.sigma_min);
    for (int i = 0; i < m; ++i) flat[static_cast<std::size_t>(m) * d + i] = phi0;
    return flat;
  }
};

std::vector<Prior> PriorsFromParams(const FeaturizedParams& p,
                                    const std::vector<double>& f) {
  std::vector<Prior> out;
  out.reserve(p.phi.size());
  for (std::size_t i = 0; i < p.phi.size(); ++i) {
    double theta = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) theta += p.v[i][k] * f[k];
    out.push_back(laplace_from_params({theta, p.phi[i]}));
  }
  return out;
}

std::vector<Prior> MixAll(const std::vector<Prior>& predicted, const Prior& robust,
                          double lambda) {
  std::vector<Prior> out;
  out.reserve(predicted.size());
  for (const Prior& p : predicted) out.push_back(mix(p, robust, lambda));
  return out;
}

std::vector<double> ShuffledCopy(const std::vector<double>& values,
                                 RandomSource& rng) {
  std::vector<double> out = values;
  for (std::size_t i = out.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.Integer() % i);
    std::swap(out[i - 1], out[j]);
  }
  return out;
}

TrialRecord MakeRecord(const std::string& method, double epsilon,
                       std::int64_t trial, const SortedDataset& x,
                       const QuantileList& qs, const std::vector<double>& outputs) {
  TrialRecord rec;
  rec.method = method;
  rec.epsilon = epsilon;
  rec.trial = trial;
  rec.gaps.reserve(qs.qs.size());
  for (std::size_t i = 0; i < qs.qs.size(); ++i) {
    rec.gaps.push_back(gap(x, qs.qs[i], outputs[i]));
  }
  rec.max_gap = rec.gaps.empty()
                    ? 0
                    : *std::max_element(rec.gaps.begin(), rec.gaps.end());
  return rec;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double ParseNumber(const std::string& token, const std::string& column, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != token.size() || token.empty()) {
    throw DataError("unparsable value '" + token + "' in column '" + column +
                    "' at line " + std::to_string(line));
  }
  return v;
}

}  // namespace

ExperimentConfig ExperimentConfig::FromJson(const nlohmann::json& j) {
  ExperimentConfig c;
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    const nlohmann::json& v = item.value();
    try {
      if (key == "task") c.task = v.get<std::string>();
      else if (key == "m") c.m = v.get<int>();
      else if (key == "quantiles") c.quantiles = v.get<std::vector<double>>();
      else if (key == "epsilons") c.epsilons = v.get<std::vector<double>>();
      else if (key == "trials") c.trials = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "methods") c.methods = v.get<std::vector<std::string>>();
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "uniform_lo") c.uniform_lo = v.get<double>();
      else if (key == "uniform_hi") c.uniform_hi = v.get<double>();
      else if (key == "cauchy_location") c.cauchy_location = v.get<double>();
      else if (key == "cauchy_scale") c.cauchy_scale = v.get<double>();
      else if (key == "robust_nonnegative") c.robust_nonnegative = v.get<bool>();
      else if (key == "prev_scale") c.prev_scale = v.get<double>();
      else if (key == "B") c.B = v.get<double>();
      else if (key == "sigma_min") c.sigma_min = v.get<double>();
      else if (key == "sigma_max") c.sigma_max = v.get<double>();
      else if (key == "granularity") c.granularity = v.get<double>();
      else if (key == "arity") c.arity = v.get<int>();
      else if (key == "adaptation") c.adaptation = v.get<std::string>();
      else if (key == "schedule") c.schedule = v.get<std::string>();
      else if (key == "schedule_p") c.schedule_p = v.get<double>();
      else if (key == "global_depth_budgets") c.global_depth_budgets = v.get<bool>();
      else if (key == "overlapping_users") c.overlapping_users = v.get<bool>();
      else if (key == "optimizer") c.optimizer = v.get<std::string>();
      else if (key == "eps_learn_fraction") c.eps_learn_fraction = v.get<double>();
      else if (key == "delta_learn") c.delta_learn = v.get<double>();
      else if (key == "data_path") c.data_path = v.get<std::string>();
      else if (key == "value_column") c.value_column = v.get<std::string>();
      else if (key == "feature_columns")
        c.feature_columns = v.get<std::vector<std::string>>();
      else if (key == "group_column") c.group_column = v.get<std::string>();
      else if (key == "feature_mode") c.feature_mode = v.get<std::string>();
      else if (key == "tie_jitter") c.tie_jitter = v.get<double>();
      else if (key == "n") c.n = v.get<int>();
      else if (key == "public_n") c.public_n = v.get<int>();
      else if (key == "days") c.days = v.get<int>();
      else if (key == "synth_noise") c.synth_noise = v.get<double>();
      else if (key == "synth_dim") c.synth_dim = v.get<int>();
      else if (key == "threads") c.threads = v.get<int>();
      else if (key == "format") c.format = v.get<std::string>();
      else throw ConfigError("unknown config field '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config field '" + key + "' has the wrong type");
    }
  }
  if (c.task != "oneshot" && c.task != "pubpri" && c.task != "sequential") {
    throw ConfigError("task must be oneshot, pubpri, or sequential");
  }
  if (c.trials < 1) throw ConfigError("trials must be >= 1");
  if (c.epsilons.empty()) throw ConfigError("epsilons must be nonempty");
  for (double e : c.epsilons) {
    if (!(e > 0.0)) throw ConfigError("epsilon values must be > 0");
  }
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1]");
  }
  if (c.m < 1 && c.quantiles.empty()) throw ConfigError("m must be >= 1");
  if (!(c.uniform_lo < c.uniform_hi)) {
    throw ConfigError("uniform_lo must be < uniform_hi");
  }
  if (!(c.cauchy_scale > 0.0)) throw ConfigError("cauchy_scale must be > 0");
  if (!(c.sigma_min > 0.0 && c.sigma_min < c.sigma_max)) {
    throw ConfigError("need 0 < sigma_min < sigma_max");
  }
  if (!(c.B > 0.0)) throw ConfigError("B must be > 0");
  if (!(c.granularity > 0.0)) throw ConfigError("granularity must be > 0");
  if (c.arity < 0 || c.arity == 1) throw ConfigError("arity must be 0 or >= 2");
  if (c.adaptation != "conditional" && c.adaptation != "edge") {
    throw ConfigError("adaptation must be conditional or edge");
  }
  if (c.schedule != "uniform" && c.schedule != "power") {
    throw ConfigError("schedule must be uniform or power");
  }
  if (c.optimizer != "cocob" && c.optimizer != "ogd") {
    throw ConfigError("optimizer must be cocob or ogd");
  }
  if (!(c.eps_learn_fraction > 0.0 && c.eps_learn_fraction < 1.0)) {
    throw ConfigError("eps_learn_fraction must lie in (0, 1)");
  }
  if (!(c.delta_learn > 0.0 && c.delta_learn < 1.0)) {
    throw ConfigError("delta_learn must lie in (0, 1)");
  }
  if (c.feature_mode != "average" && c.feature_mode != "first") {
    throw ConfigError("feature_mode must be average or first");
  }
  if (c.n < 1) throw ConfigError("n must be >= 1");
  if (c.days < 1) throw ConfigError("days must be >= 1");
  if (c.synth_dim < 1) throw ConfigError("synth_dim must be >= 1");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  if (c.format != "jsonl" && c.format != "csv") {
    throw ConfigError("format must be jsonl or csv");
  }
  for (const std::string& mth : c.methods) {
    if (!IsRegisteredMethod(mth)) throw ConfigError("unknown method '" + mth + "'");
  }
  try {
    c.Quantiles();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

nlohmann::json ExperimentConfig::ToJson() const {
  nlohmann::json j;
  j["task"] = task;
  j["m"] = m;
  j["quantiles"] = quantiles;
  j["epsilons"] = epsilons;
  j["trials"] = trials;
  j["seed"] = seed;
  j["methods"] = methods;
  j["lambda"] = lambda;
  j["uniform_lo"] = uniform_lo;
  j["uniform_hi"] = uniform_hi;
  j["cauchy_location"] = cauchy_location;
  j["cauchy_scale"] = cauchy_scale;
  j["robust_nonnegative"] = robust_nonnegative;
  j["prev_scale"] = prev_scale;
  j["B"] = B;
  j["sigma_min"] = sigma_min;
  j["sigma_max"] = sigma_max;
  j["granularity"] = granularity;
  j["arity"] = arity;
  j["adaptation"] = adaptation;
  j["schedule"] = schedule;
  j["schedule_p"] = schedule_p;
  j["global_depth_budgets"] = global_depth_budgets;
  j["overlapping_users"] = overlapping_users;
  j["optimizer"] = optimizer;
  j["eps_learn_fraction"] = eps_learn_fraction;
  j["delta_learn"] = delta_learn;
  j["data_path"] = data_path;
  j["value_column"] = value_column;
  j["feature_columns"] = feature_columns;
  j["group_column"] = group_column;
  j["feature_mode"] = feature_mode;
  j["tie_jitter"] = tie_jitter;
  j["n"] = n;
  j["public_n"] = public_n;
  j["days"] = days;
  j["synth_noise"] = synth_noise;
  j["synth_dim"] = synth_dim;
  j["threads"] = threads;
  j["format"] = format;
  return j;
}

QuantileList ExperimentConfig::Quantiles() const {
  if (quantiles.empty()) return QuantileList::Uniform(m);
  return QuantileList(quantiles);
}

Prior ExperimentConfig::RobustPrior() const {
  if (robust_nonnegative) return Prior::MakeHalfCauchy(cauchy_scale);
  return Prior::MakeCauchy(cauchy_location, cauchy_scale);
}

nlohmann::json TrialRecord::ToJson() const {
  nlohmann::json j;
  j["method"] = method;
  j["epsilon"] = epsilon;
  j["trial"] = trial;
  j["gaps"] = gaps;
  j["max_gap"] = max_gap;
  return j;
}

SyntheticData generate_synthetic(int days, int m, double noise_scale,
                                 RandomSource& rng, int dim) {
  if (days < 1) throw ConfigError("generate_synthetic requires days >= 1");
  if (m < 1) throw ConfigError("generate_synthetic requires m >= 1");
  std::vector<double> a(dim);
  for (double& v : a) v = rng.Normal();
  std::vector<double> b(m + 2);
  for (double& v : b) v = rng.Normal();
  std::sort(b.begin(), b.end());

  const int base_count = 100 / (m + 1);
  SyntheticData out;
  out.datasets.reserve(days);
  out.features.reserve(days);
  out.truth.reserve(days);
  for (int t = 0; t < days; ++t) {
    std::vector<double> f(dim);
    for (double& v : f) v = rng.Normal();
    double shift = std::inner_product(a.begin(), a.end(), f.begin(), 0.0);
    std::vector<double> values;
    for (int cell = 0; cell + 1 < m + 2; ++cell) {
      double lo = shift + b[cell];
      double hi = shift + b[cell + 1];
      int count = base_count + PoissonDraw(noise_scale, rng);
      for (int c = 0; c < count; ++c) {
        values.push_back(lo + (hi - lo) * rng.Uniform());
      }
    }
    std::vector<double> truth(m);
    for (int i = 0; i < m; ++i) truth[i] = shift + b[i + 1];
    out.datasets.push_back(std::move(values));
    out.features.push_back(std::move(f));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

std::vector<Prior> pubfit(const std::vector<double>& public_values, int n,
                          const QuantileList& qs, const ExperimentConfig& cfg,
                          RandomSource& rng) {
  const std::size_t N = public_values.size();
  if (n < 1) throw ConfigError("pubfit requires block size n >= 1");
  if (N < static_cast<std::size_t>(n)) {
    throw DataError("pubfit requires at least n public points");
  }
  const std::size_t T = N / static_cast<std::size_t>(n);
  std::vector<double> shuffled = ShuffledCopy(public_values, rng);

  const FlatParams layout{qs.m(), 1};
  const std::vector<double> f = {1.0};
  std::vector<double> flat = layout.InitialFlat(cfg);

  const double phi_lo = 1.0 / cfg.sigma_max;
  const double phi_hi = 1.0 / cfg.sigma_min;
  const bool use_ogd = cfg.optimizer == "ogd";
  const double root = std::sqrt(static_cast<double>(qs.m()) /
                                static_cast<double>(T));
  std::vector<double> eta(layout.size(), cfg.B * root);
  for (int i = 0; i < qs.m(); ++i) {
    eta[static_cast<std::size_t>(qs.m()) + i] =
        (cfg.sigma_max - cfg.sigma_min) / (4.0 * cfg.B + cfg.sigma_max) * root;
  }
  std::vector<double> lo(layout.size(), -cfg.B);
  std::vector<double> hi(layout.size(), cfg.B);
  for (int i = 0; i < qs.m(); ++i) {
    lo[static_cast<std::size_t>(qs.m()) + i] = phi_lo;
    hi[static_cast<std::size_t>(qs.m()) + i] = phi_hi;
  }

  Cocob cocob(flat);
  Ogd ogd(flat, eta, lo, hi);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> block(shuffled.begin() + t * n,
                              shuffled.begin() + (t + 1) * n);
    SortedDataset x(std::move(block), cfg.tie_jitter);
    FeaturizedParams params = layout.Unpack(flat, cfg);
    FeaturizedLoss fl = featurized_loss(x, qs, f, params);
    std::vector<double> grad = layout.PackGrad(fl);
    flat = use_ogd ? ogd.Step(grad) : cocob.Step(grad);
  }
  if (use_ogd) flat = ogd.Average();
  return PriorsFromParams(layout.Unpack(flat, cfg), f);
}

std::vector<double> public_quantiles(const std::vector<double>& public_values,
                                     const QuantileList& qs) {
  if (public_values.empty()) throw DataError("public data is empty");
  std::vector<double> sorted = public_values;
  std::sort(sorted.begin(), sorted.end());
  const std::int64_t N = static_cast<std::int64_t>(sorted.size());
  std::vector<double> out;
  out.reserve(qs.qs.size());
  for (double q : qs.qs) {
    std::int64_t idx = std::min(rank_index(q, N), N - 1);
    out.push_back(sorted[idx]);
  }
  return out;
}

std::vector<Prior> public_cauchy(const std::vector<double>& public_values,
                                 const QuantileList& qs, double scale) {
  std::vector<double> locs = public_quantiles(public_values, qs);
  std::vector<Prior> out;
  out.reserve(locs.size());
  for (double loc : locs) out.push_back(Prior::MakeCauchy(loc, scale));
  return out;
}

ReleasePlan make_plan(const QuantileList& qs, double epsilon,
                      const ExperimentConfig& cfg, std::vector<Prior> priors) {
  ReleasePlan plan;
  plan.qs = qs;
  plan.epsilon = epsilon;
  plan.arity = cfg.arity == 0 ? default_arity(qs.m()) : cfg.arity;
  plan.adaptation = cfg.adaptation == "conditional" ? Adaptation::kConditional
                                                    : Adaptation::kEdge;
  plan.schedule = cfg.schedule == "power" ? Schedule::Power(cfg.schedule_p)
                                          : Schedule::MakeUniform();
  plan.priors = std::move(priors);
  plan.global_depth_budgets = cfg.global_depth_budgets;
  return plan;
}

std::vector<TrialRecord> run_pubpri(
    const std::vector<double>& public_values,
    const std::vector<std::vector<double>>& private_datasets,
    const std::string& method, double epsilon, const ExperimentConfig& cfg,
    RandomSource& rng) {
  const QuantileList qs = cfg.Quantiles();
  RandomSource fit_rng = rng.Split(0);

  bool direct_outputs = false;
  std::vector<double> direct;
  std::vector<Prior> priors;
  if (method == "uniform") {
    priors.assign(qs.m(), Prior::MakeUniform(cfg.uniform_lo, cfg.uniform_hi));
  } else if (method == "cauchy") {
    priors.assign(qs.m(), cfg.RobustPrior());
  } else if (method == "pubfit") {
    priors = pubfit(public_values, cfg.n, qs, cfg, fit_rng);
  } else if (method == "pubfit-robust") {
    priors = MixAll(pubfit(public_values, cfg.n, qs, cfg, fit_rng),
                    cfg.RobustPrior(), cfg.lambda);
  } else if (method == "public-cauchy") {
    priors = public_cauchy(public_values, qs, cfg.cauchy_scale);
  } else if (method == "public-quantiles") {
    direct_outputs = true;
    direct = public_quantiles(public_values, qs);
  } else {
    throw ConfigError("unknown public-private method '" + method + "'");
  }

  std::vector<TrialRecord> records;
  records.reserve(private_datasets.size());
  for (std::size_t t = 0; t < private_datasets.size(); ++t) {
    SortedDataset x(private_datasets[t], cfg.tie_jitter);
    if (direct_outputs) {
      records.push_back(MakeRecord(method, epsilon,
                                   static_cast<std::int64_t>(t), x, qs, direct));
      continue;
    }
    RandomSource trial_rng = rng.Split(t + 1);
    ReleaseResult res =
        release_multi(x, make_plan(qs, epsilon, cfg, priors), trial_rng);
    records.push_back(MakeRecord(method, epsilon, static_cast<std::int64_t>(t),
                                 x, qs, res.outputs));
  }
  return records;
}

std::vector<TrialRecord> run_sequential(
    const std::vector<std::vector<double>>& datasets,
    const std::vector<std::vector<double>>& features, const std::string& method,
    double epsilon, const ExperimentConfig& cfg, RandomSource& rng) {
  const QuantileList qs = cfg.Quantiles();
  const int m = qs.m();
  const std::size_t T = datasets.size();
  if (T == 0) throw DataError("run_sequential requires at least one dataset");
  const Prior robust = cfg.RobustPrior();

  const bool learner_method =
      method == "dpftrl" || method == "nonprivate" || method == "pubprox";
  const bool featurized =
      learner_method && features.size() == T && !features.empty() &&
      !features[0].empty();
  if (method == "dpftrl" && !featurized && !features.empty()) {
    throw ConfigError("dpftrl needs one feature vector per dataset");
  }
  // Learner features get a leading intercept coordinate.
  const int d = featurized ? 1 + static_cast<int>(features[0].size()) : 1;
  const std::vector<double> unit_feature = {1.0};
  auto day_feature = [&](std::size_t t) {
    if (!featurized) return unit_feature;
    std::vector<double> f(1, 1.0);
    f.insert(f.end(), features[t].begin(), features[t].end());
    return f;
  };

  const double step_eps =
      cfg.overlapping_users ? epsilon / static_cast<double>(T) : epsilon;

  // Static priors shared across days.
  std::vector<Prior> static_priors;
  if (method == "static-uniform") {
    static_priors.assign(m, Prior::MakeUniform(cfg.uniform_lo, cfg.uniform_hi));
  } else if (method == "static-cauchy") {
    static_priors.assign(m, Prior::MakeCauchy(cfg.cauchy_location, cfg.cauchy_scale));
  } else if (method == "static-halfcauchy") {
    static_priors.assign(m, Prior::MakeHalfCauchy(cfg.cauchy_scale));
  }

  const FlatParams layout{m, d};
  std::vector<double> flat = layout.InitialFlat(cfg);
  Cocob cocob(flat);

  // DP-FTRL state: one learner per variable group, each on budget eps'/2.
  const double eps_prime = method == "dpftrl" ? cfg.eps_learn_fraction * step_eps : 0.0;
  const double release_eps = step_eps - eps_prime;
  const double phi_lo = 1.0 / cfg.sigma_max;
  const double phi_hi = 1.0 / cfg.sigma_min;
  std::unique_ptr<FtrlBox> ftrl_v;
  std::unique_ptr<FtrlBox> ftrl_phi;
  if (method == "dpftrl") {
    const double sigma =
        noise_scale(eps_prime / 2.0, cfg.delta_learn, static_cast<std::int64_t>(T));
    const double eta_v =
        std::sqrt(eps_prime / (cfg.sigma_min * cfg.sigma_min * T) *
                  std::sqrt(static_cast<double>(m) / d));
    const double eta_phi = std::sqrt(
        eps_prime * std::sqrt(static_cast<double>(m)) /
        (cfg.sigma_min * cfg.sigma_min * cfg.sigma_max * cfg.sigma_max * T));
    std::size_t vdim = static_cast<std::size_t>(m) * d;
    ftrl_v = std::make_unique<FtrlBox>(
        std::vector<double>(vdim, 0.0), std::vector<double>(vdim, eta_v),
        std::vector<double>(vdim, -cfg.B), std::vector<double>(vdim, cfg.B),
        TreeAggregator(static_cast<std::int64_t>(T), sigma, 1.0,
                       static_cast<int>(vdim), rng.Split(1u << 20)));
    ftrl_phi = std::make_unique<FtrlBox>(
        std::vector<double>(m, Clamp(1.0, phi_lo, phi_hi)),
        std::vector<double>(m, eta_phi), std::vector<double>(m, phi_lo),
        std::vector<double>(m, phi_hi),
        TreeAggregator(static_cast<std::int64_t>(T), sigma, 1.0, m,
                       rng.Split(1u << 21)));
  }

  std::vector<double> prev_outputs;
  std::vector<TrialRecord> records;
  records.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    SortedDataset x(datasets[t], cfg.tie_jitter);
    const std::vector<double> f = day_feature(t);

    std::vector<Prior> priors;
    double eps_t = step_eps;
    if (!static_priors.empty()) {
      priors = static_priors;
    } else if (method == "pubprev") {
      if (prev_outputs.empty()) {
        priors.assign(m, robust);
      } else {
        std::vector<Prior> predicted;
        predicted.reserve(m);
        for (double o : prev_outputs) {
          predicted.push_back(Prior::MakeLaplace(o, cfg.prev_scale));
        }
        priors = MixAll(predicted, robust, cfg.lambda);
      }
    } else if (method == "pubprox" || method == "nonprivate") {
      priors = MixAll(PriorsFromParams(layout.Unpack(flat, cfg), f), robust,
                      cfg.lambda);
    } else if (method == "dpftrl") {
      FeaturizedParams params;
      params.v.assign(m, std::vector<double>(d, 0.0));
      const std::vector<double>& vit = ftrl_v->iterate();
      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < d; ++k) {
          params.v[i][k] = vit[static_cast<std::size_t>(i) * d + k];
        }
      }
      params.phi = ftrl_phi->iterate();
      priors = MixAll(PriorsFromParams(params, f), robust, cfg.lambda);
      eps_t = release_eps;
    } else {
      throw ConfigError("unknown sequential method '" + method + "'");
    }

    RandomSource day_rng = rng.Split(t + 1);
    ReleaseResult res =
        release_multi(x, make_plan(qs, eps_t, cfg, priors), day_rng);
    records.push_back(MakeRecord(method, epsilon, static_cast<std::int64_t>(t),
                                 x, qs, res.outputs));

    // Learning update from this day's feedback.
    if (method == "pubprev") {
      prev_outputs = res.outputs;
    } else if (method == "pubprox") {
      std::vector<Interval> targets;
      targets.reserve(m);
      for (double o : res.outputs) {
        targets.push_back(Interval{o - cfg.granularity / 2.0,
                                   o + cfg.granularity / 2.0});
      }
      FeaturizedLoss fl =
          featurized_loss_intervals(targets, f, layout.Unpack(flat, cfg));
      flat = cocob.Step(layout.PackGrad(fl));
    } else if (method == "nonprivate") {
      FeaturizedLoss fl = featurized_loss(x, qs, f, layout.Unpack(flat, cfg));
      flat = cocob.Step(layout.PackGrad(fl));
    } else if (method == "dpftrl") {
      FeaturizedParams params;
      params.v.assign(m, std::vector<double>(d, 0.0));
      const std::vector<double>& vit = ftrl_v->iterate();
      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < d; ++k) {
          params.v[i][k] = vit[static_cast<std::size_t>(i) * d + k];
        }
      }
      params.phi = ftrl_phi->iterate();
      FeaturizedLoss fl = featurized_loss(x, qs, f, params);
      std::vector<double> gv(static_cast<std::size_t>(m) * d, 0.0);
      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < d; ++k) {
          gv[static_cast<std::size_t>(i) * d + k] = fl.dv[i][k];
        }
      }
      ftrl_v->Step(gv);
      ftrl_phi->Step(fl.dphi);
    }
  }
  return records;
}

std::vector<SummaryRow> aggregate(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw Error("aggregate requires records");
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::vector<double>> buckets;
  for (const TrialRecord& r : records) {
    auto key = std::make_pair(r.method, r.epsilon);
    auto it = buckets.find(key);
    if (it == buckets.end()) {
      keys.push_back(key);
      it = buckets.emplace(key, std::vector<double>{}).first;
    }
    it->second.push_back(static_cast<double>(r.max_gap));
  }

  auto nearest_rank = [](const std::vector<double>& sorted, double p) {
    std::size_t n = sorted.size();
    std::size_t r = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(n) - 1e-9));
    if (r < 1) r = 1;
    if (r > n) r = n;
    return sorted[r - 1];
  };

  std::vector<SummaryRow> rows;
  rows.reserve(keys.size());
  for (const auto& key : keys) {
    std::vector<double>& vals = buckets[key];
    std::sort(vals.begin(), vals.end());
    double mean =
        std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    rows.push_back(SummaryRow{key.first, key.second, mean,
                              nearest_rank(vals, 0.5), nearest_rank(vals, 0.05),
                              nearest_rank(vals, 0.95)});
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "method,epsilon,mean_max_gap,median_max_gap,p5,p95\n";
  for (const SummaryRow& r : rows) {
    os << r.method << ',' << FormatDouble(r.epsilon) << ','
       << FormatDouble(r.mean_max_gap) << ',' << FormatDouble(r.median_max_gap)
       << ',' << FormatDouble(r.p5) << ',' << FormatDouble(r.p95) << '\n';
  }
  return os.str();
}

IngestResult ingest_csv(const std::string& path, const std::string& value_column,
                        const std::vector<std::string>& feature_columns,
                        const std::string& group_column,
                        const std::string& feature_mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input file '" + path + "'");
  std::vector<std::string> header = SplitCsvLine(line);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ConfigError("missing column '" + name + "' in '" + path + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t value_idx = column_index(value_column);
  std::vector<std::size_t> feature_idx;
  for (const std::string& name : feature_columns) {
    feature_idx.push_back(column_index(name));
  }
  const bool grouped = !group_column.empty();
  const std::size_t group_idx = grouped ? column_index(group_column) : 0;

  IngestResult out;
  std::map<std::string, std::size_t> group_pos;
  std::vector<std::size_t> row_counts;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = SplitCsvLine(line);
    if (fields.size() != header.size()) {
      throw DataError("wrong number of fields at line " + std::to_string(line_no));
    }
    double value = ParseNumber(fields[value_idx], value_column, line_no);
    std::string group = grouped ? fields[group_idx] : "";
    auto it = group_pos.find(group);
    if (it == group_pos.end()) {
      it = group_pos.emplace(group, out.groups.size()).first;
      out.groups.push_back(group);
      out.datasets.emplace_back();
      out.features.emplace_back(feature_idx.size(), 0.0);
      row_counts.push_back(0);
    }
    std::size_t g = it->second;
    out.datasets[g].push_back(value);
    ++row_counts[g];
    if (!feature_idx.empty() &&
        (feature_mode == "average" || row_counts[g] == 1)) {
      for (std::size_t k = 0; k < feature_idx.size(); ++k) {
        double fv = ParseNumber(fields[feature_idx[k]], feature_columns[k], line_no);
        if (feature_mode == "average") {
          out.features[g][k] += fv;
        } else {
          out.features[g][k] = fv;
        }
      }
    }
  }
  if (out.groups.empty()) throw DataError("no data rows in '" + path + "'");
  if (feature_mode == "average") {
    for (std::size_t g = 0; g < out.features.size(); ++g) {
      for (double& fv : out.features[g]) {
        fv /= static_cast<double>(row_counts[g]);
      }
    }
  }
  return out;
}

}  // namespace dpq
