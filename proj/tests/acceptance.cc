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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "dpq/pipelines.h"

using namespace dpq;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void Report(int criterion, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion,
              name, detail.c_str());
  CHECK_MESSAGE(ok, "criterion ", criterion, ": ", name, " — ", detail);
}

std::string Fmt(const char* fmt, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

std::vector<double> Normals(int count, std::uint64_t seed) {
  RandomSource rng(seed);
  std::vector<double> out(count);
  for (double& v : out) v = rng.Normal();
  return out;
}

double LaplaceCdf(double t, double nu, double scale) {
  double z = (t - nu) / scale;
  return z < 0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
}
}  // namespace

TEST_CASE("criterion 1: em sampling law") {
  SortedDataset x({1, 2, 3, 4, 5});
  Prior mu = Prior::MakeUniform(0, 6);
  std::vector<int> gaps = {2, 1, 0, 1, 2, 3};
  std::vector<double> target(6);
  double z = 0.0;
  for (int k = 0; k < 6; ++k) z += (target[k] = std::exp(-gaps[k]));
  for (double& p : target) p /= z;
  const int N = 100000;
  std::vector<double> emp(6, 0.0);
  RandomSource rng(2024);
  for (int i = 0; i < N; ++i) {
    double o = release_single(x, 0.5, 2.0, mu, rng);
    int k = 0;
    for (double v : x.values()) k += v < o ? 1 : 0;
    emp[k] += 1.0 / N;
  }
  double tv = 0.0;
  for (int k = 0; k < 6; ++k) tv += std::fabs(emp[k] - target[k]);
  tv /= 2.0;
  bool ok = tv <= 0.01 && std::fabs(target[2] - 0.4863) < 2e-4;
  Report(1, "EM sampling law, TV <= 0.01 over 1e5 releases", ok,
         Fmt("tv=%.5f, p_opt=%.4f", tv, target[2]));
}

TEST_CASE("criterion 2: single-quantile error bound") {
  const double eps = 1.0, beta = 0.05;
  Prior mu = Prior::MakeCauchy(0, 1);
  int exceed = 0;
  const int trials = 1000;
  RandomSource rng(7);
  for (int t = 0; t < trials; ++t) {
    SortedDataset x(Normals(1000, 1000 + t), 1e-12);
    double psi = psi_eps(x, 0.5, mu, eps).value;
    double bound = (2.0 / eps) * std::log((1.0 / beta) / psi);
    double o = release_single(x, 0.5, eps, mu, rng);
    if (static_cast<double>(gap(x, 0.5, o)) > bound) ++exceed;
  }
  double frac = static_cast<double>(exceed) / trials;
  bool ok = frac <= 0.05 + 0.02;
  Report(2, "gap exceeds the Eq.-2 bound at beta=0.05 in <= 7% of trials", ok,
         Fmt("fraction=%.3f, limit=%.3f", frac, 0.07));
}

TEST_CASE("criterion 3: consistency under perfect priors") {
  SortedDataset x({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  bool ok = true;
  std::int64_t worst = 0;
  for (double eps : {0.05, 5.0}) {
    for (int m : {1, 3, 7}) {
      QuantileList qs = QuantileList::Uniform(m);
      ReleasePlan plan;
      plan.qs = qs;
      plan.epsilon = eps;
      plan.arity = 2;
      plan.adaptation = Adaptation::kEdge;
      for (double q : qs.qs) {
        auto r = static_cast<double>(rank_index(q, 15));
        plan.priors.push_back(Prior::MakeUniform(r, r + 1));
      }
      RandomSource rng(m * 100 + static_cast<int>(eps * 10));
      for (int t = 0; t < 100; ++t) {
        ReleaseResult res = release_multi(x, plan, rng);
        worst = std::max(worst, res.max_gap);
        ok = ok && res.max_gap == 0;
      }
    }
  }
  Report(3, "perfect nested priors give max gap 0 in 100/100 releases", ok,
         Fmt("worst gap=%.0f over m in {1,3,7}, eps in {%.2f, 5}",
             static_cast<double>(worst), 0.05));
}

TEST_CASE("criterion 4: privacy accounting on random plans") {
  RandomSource rng(99);
  bool ok = true;
  double worst_path = 0.0, worst_point = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    int m = 1 + static_cast<int>(rng.Integer() % 15);
    int K = 2 + static_cast<int>(rng.Integer() % 3);
    int n = static_cast<int>(rng.Integer() % 30);
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) vals.push_back(rng.Normal() * 5);
    SortedDataset x(vals, 1e-9);
    ReleasePlan plan;
    plan.qs = QuantileList::Uniform(m);
    plan.epsilon = 0.2 + 3 * rng.Uniform();
    plan.arity = K;
    plan.adaptation = Adaptation::kConditional;
    int sched = static_cast<int>(rng.Integer() % 3);
    plan.schedule = sched == 0 ? Schedule::MakeUniform()
                               : Schedule::Power(sched == 1 ? 1.5 : 2.0);
    for (int i = 0; i < m; ++i) {
      plan.priors.push_back(Prior::MakeCauchy(rng.Normal(), 1 + rng.Uniform()));
    }
    ReleaseResult res = release_multi(x, plan, rng);

    std::map<int, double> node_total;
    std::map<int, int> parent;
    std::map<int, std::pair<std::int64_t, std::int64_t>> range;
    std::set<int> has_child;
    for (const BudgetLogEntry& e : res.budget_log) {
      node_total[e.node_id] += e.per_call_epsilon;
      parent[e.node_id] = e.parent_id;
      range[e.node_id] = {e.lo_index, e.hi_index};
      if (e.parent_id >= 0) has_child.insert(e.parent_id);
    }
    for (const auto& [id, total] : node_total) {
      (void)total;
      if (has_child.count(id)) continue;
      double path = 0.0;
      for (int cur = id; cur != -1; cur = parent[cur]) path += node_total[cur];
      worst_path = std::max(worst_path, std::fabs(path - plan.epsilon));
      ok = ok && std::fabs(path - plan.epsilon) <= 1e-9;
    }
    for (std::int64_t i = 0; i < x.n(); ++i) {
      double spent = 0.0;
      for (const auto& [id, total] : node_total) {
        if (i >= range[id].first && i < range[id].second) spent += total;
      }
      worst_point = std::max(worst_point, spent - plan.epsilon);
      ok = ok && spent <= plan.epsilon + 1e-9;
    }
  }
  Report(4, "leaf-path budget sums equal eps; per-datapoint spend <= eps", ok,
         Fmt("max |path-eps|=%.2e, max overspend=%.2e", worst_path, worst_point));
}

TEST_CASE("criterion 5: swap lemma brute force") {
  long violations = 0, checked = 0;
  std::vector<double> qgrid;
  for (int i = 1; i <= 9; ++i) qgrid.push_back(i / 10.0);
  std::vector<double> ogrid;
  for (int i = 0; i <= 12; ++i) ogrid.push_back(0.5 + i * 0.5);
  for (int mask = 1; mask < 64; ++mask) {
    std::vector<double> vals;
    for (int i = 0; i < 6; ++i)
      if (mask & (1 << i)) vals.push_back(i + 1.0);
    SortedDataset x(vals);
    for (std::size_t qa = 0; qa < qgrid.size(); ++qa) {
      for (std::size_t qb = qa; qb < qgrid.size(); ++qb) {
        double q0 = qgrid[qa], q1 = qgrid[qb];
        for (std::size_t oa = 0; oa < ogrid.size(); ++oa) {
          for (std::size_t ob = 0; ob < oa; ++ob) {
            double o0 = ogrid[oa], o1 = ogrid[ob];  // o0 > o1: out of order
            auto unsorted = std::max(gap(x, q0, o0), gap(x, q1, o1));
            auto sorted = std::max(gap(x, q0, o1), gap(x, q1, o0));
            ++checked;
            if (sorted > unsorted) ++violations;
          }
        }
      }
    }
  }
  Report(5, "sorting out-of-order outputs never increases the max gap",
         violations == 0,
         Fmt("violations=%.0f of %.0f combinations",
             static_cast<double>(violations), static_cast<double>(checked)));
}

TEST_CASE("criterion 6: closed-form loss vs likelihood oracle") {
  double max_err = 0.0;
  auto probe = [&](double a, double b, double theta, double phi) {
    double nu = theta / phi, scale = 1.0 / phi;
    double want = -std::log(LaplaceCdf(b, nu, scale) - LaplaceCdf(a, nu, scale));
    max_err = std::max(max_err, std::fabs(laplace_loss(a, b, theta, phi) - want));
  };
  for (int ia = 0; ia < 10; ++ia) {
    double a = -3.0 + ia * (2.99 / 9.0);
    for (int ib = 0; ib < 10; ++ib) {
      double b = 0.01 + ib * (2.99 / 9.0);
      for (int it = 0; it < 10; ++it) {
        double theta = -5.0 + it * (10.0 / 9.0);
        for (int ip = 0; ip < 10; ++ip) {
          double phi = 0.2 + ip * (1.8 / 9.0);
          probe(a, b, theta, phi);
        }
      }
      // Both branch boundaries.
      probe(a, b, a * 1.0, 1.0);
      probe(a, b, b * 1.0, 1.0);
      probe(a, b, a * 0.7, 0.7);
      probe(a, b, b * 0.7, 0.7);
    }
  }
  Report(6, "laplace_loss within 1e-8 of the oracle on the 1e4 grid",
         max_err <= 1e-8, Fmt("max abs err=%.2e (limit %.0e)", max_err, 1e-8));
}

TEST_CASE("criterion 7: analytic gradients vs finite differences") {
  const double h = 1e-5;
  double max_rel = 0.0;
  auto rel = [&](double analytic, double fd) {
    double r = std::fabs(analytic - fd) / std::max(1.0, std::fabs(fd));
    max_rel = std::max(max_rel, r);
  };
  RandomSource rng(12);
  for (int t = 0; t < 100; ++t) {
    double a = -3 * rng.Uniform() - 0.05;
    double b = 3 * rng.Uniform() + 0.05;
    double theta = 8 * rng.Uniform() - 4;
    double phi = 0.15 + 2 * rng.Uniform();
    LossGrad g = laplace_loss_grad(a, b, theta, phi);
    rel(g.dtheta, (laplace_loss(a, b, theta + h, phi) -
                   laplace_loss(a, b, theta - h, phi)) / (2 * h));
    rel(g.dphi, (laplace_loss(a, b, theta, phi + h) -
                 laplace_loss(a, b, theta, phi - h)) / (2 * h));
  }
  SortedDataset x({-2, -1, 0.5, 1, 2, 4, 6});
  QuantileList qs = QuantileList::Uniform(3);
  for (int t = 0; t < 100; ++t) {
    FeaturizedParams params;
    params.B = 10;
    params.sigma_min = 0.2;
    std::vector<double> f = {2 * rng.Uniform() - 1, 2 * rng.Uniform() - 1};
    for (int i = 0; i < 3; ++i) {
      params.v.push_back({4 * rng.Uniform() - 2, 4 * rng.Uniform() - 2});
      params.phi.push_back(0.2 + 2 * rng.Uniform());
    }
    FeaturizedLoss fl = featurized_loss(x, qs, f, params);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 2; ++j) {
        auto up = params, dn = params;
        up.v[i][j] += h;
        dn.v[i][j] -= h;
        rel(fl.dv[i][j], (featurized_loss(x, qs, f, up).loss -
                          featurized_loss(x, qs, f, dn).loss) / (2 * h));
      }
      auto up = params, dn = params;
      up.phi[i] += h;
      dn.phi[i] -= h;
      rel(fl.dphi[i], (featurized_loss(x, qs, f, up).loss -
                       featurized_loss(x, qs, f, dn).loss) / (2 * h));
    }
  }
  SortedDataset xd({-1, 0.5, 2, 3.5, 4});
  QuantileList qs2 = QuantileList::Uniform(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> W;
    for (int i = 0; i < 2; ++i) {
      std::vector<double> row(4);
      double z = 0;
      for (double& w : row) z += (w = 0.05 + rng.Uniform());
      for (double& w : row) w /= z;
      W.push_back(row);
    }
    std::vector<double> eps = {0.5 + rng.Uniform(), 0.5 + rng.Uniform()};
    DiscreteLoss dl = discrete_loss(xd, qs2, eps, W, -4, 6);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 4; ++j) {
        auto up = W, dn = W;
        up[i][j] += h;
        dn[i][j] -= h;
        rel(dl.dW[i][j], (discrete_loss(xd, qs2, eps, up, -4, 6).loss -
                          discrete_loss(xd, qs2, eps, dn, -4, 6).loss) / (2 * h));
      }
    }
  }
  Report(7, "gradients match central differences at 100 points per op",
         max_rel <= 1e-5, Fmt("max rel err=%.2e (limit %.0e)", max_rel, 1e-5));
}

TEST_CASE("criterion 8: tree aggregation exactness and noise accounting") {
  bool exact = true;
  {
    const int T = 4096;
    TreeAggregator agg(T, 0.0, 1e9, 2, RandomSource(1));
    RandomSource rng(2);
    std::vector<double> run(2, 0.0);
    for (int t = 1; t <= T; ++t) {
      std::vector<double> g = {
          static_cast<double>(static_cast<int>(rng.Integer() % 9)) - 4,
          static_cast<double>(static_cast<int>(rng.Integer() % 9)) - 4};
      agg.Add(g);
      run[0] += g[0];
      run[1] += g[1];
      if (agg.Sum(t) != run) exact = false;
    }
  }
  const double sigma = 1.5, delta2 = 1.0;
  const std::int64_t t_probe = 7;  // popcount 3
  const int N = 10000;
  double mean = 0, m2 = 0;
  RandomSource root(3);
  for (int i = 0; i < N; ++i) {
    TreeAggregator agg(8, sigma, delta2, 1, root.Split(i));
    for (int t = 0; t < t_probe; ++t) agg.Add({0.0});
    double v = agg.Sum(t_probe)[0];
    mean += v / N;
    m2 += v * v / N;
  }
  double var = m2 - mean * mean;
  double expect = TreeAggregator::NoisyNodes(t_probe) * sigma * sigma * delta2;
  double band = 2.576 * expect * std::sqrt(2.0 / N);
  bool noise_ok = std::fabs(var - expect) <= band;
  Report(8, "sigma=0 prefix sums exact at T=4096; noise variance in 99% band",
         exact && noise_ok, Fmt("var=%.3f vs expected %.3f", var, expect));
}

TEST_CASE("criterion 9: public-private trend") {
  ExperimentConfig cfg;
  cfg.m = 9;
  cfg.n = 100;
  cfg.uniform_lo = -10;
  cfg.uniform_hi = 10;
  std::vector<double> pub = Normals(10000, 555);
  std::vector<std::vector<double>> privs;
  for (int t = 0; t < 100; ++t) privs.push_back(Normals(100, 556 + t));
  auto mean_gap = [&](const std::string& method, double eps, std::uint64_t seed) {
    RandomSource rng(seed);
    auto recs = run_pubpri(pub, privs, method, eps, cfg, rng);
    double total = 0;
    for (const auto& r : recs) total += static_cast<double>(r.max_gap);
    return total / static_cast<double>(recs.size());
  };
  double pubfit_low = mean_gap("pubfit", 0.1, 1);
  double uniform_low = mean_gap("uniform", 0.1, 2);
  std::vector<std::string> all = {"uniform",       "cauchy",
                                  "pubfit",        "pubfit-robust",
                                  "public-cauchy", "public-quantiles"};
  double best_high = 1e300, robust_high = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    double g = mean_gap(all[i], 10.0, 10 + i);
    best_high = std::min(best_high, g);
    if (all[i] == "pubfit-robust") robust_high = g;
  }
  bool ok = pubfit_low <= uniform_low && robust_high <= 1.5 * best_high;
  Report(9, "pubfit beats uniform at eps=0.1; robust within 1.5x at eps=10", ok,
         Fmt("low: %.2f<=%.2f; ", pubfit_low, uniform_low) +
             Fmt("high: %.2f vs 1.5x%.2f", robust_high, best_high));
}

TEST_CASE("criterion 10: sequential trend") {
  ExperimentConfig cfg;
  cfg.m = 9;
  cfg.uniform_lo = -100;
  cfg.uniform_hi = 100;
  cfg.days = 2000;
  RandomSource gen(3);
  SyntheticData d = generate_synthetic(2000, 9, 0.0, gen);
  const double eps = std::pow(10.0, -0.5);
  auto mean_gap = [&](const std::string& method, std::uint64_t seed) {
    RandomSource rng(seed);
    auto recs = run_sequential(d.datasets, d.features, method, eps, cfg, rng);
    double total = 0;
    for (const auto& r : recs) total += static_cast<double>(r.max_gap);
    return total / static_cast<double>(recs.size());
  };
  double stat = mean_gap("static-uniform", 21);
  double prox = mean_gap("pubprox", 22);
  double nonpriv = mean_gap("nonprivate", 23);
  bool ok = prox <= 0.8 * stat && nonpriv <= prox;
  Report(10, "pubprox <= 0.8x static uniform; non-private <= pubprox", ok,
         Fmt("prox=%.2f vs 0.8x static=%.2f; ", prox, 0.8 * stat) +
             Fmt("nonprivate=%.2f <= prox=%.2f", nonpriv, prox));
}

TEST_CASE("criterion 11: robustness floor under adversarial priors") {
  ReleasePlan mixed_plan, pure_plan;
  mixed_plan.qs = pure_plan.qs = QuantileList::Uniform(9);
  mixed_plan.epsilon = pure_plan.epsilon = 1.0;
  mixed_plan.arity = pure_plan.arity = 2;
  mixed_plan.adaptation = pure_plan.adaptation = Adaptation::kConditional;
  Prior adversarial = Prior::MakeLaplace(1e6, 1.0);
  Prior robust = Prior::MakeCauchy(0, 1);
  for (int i = 0; i < 9; ++i) {
    mixed_plan.priors.push_back(mix(adversarial, robust, 0.1));
    pure_plan.priors.push_back(robust);
  }
  RandomSource rng(17);
  double mixed_total = 0, pure_total = 0;
  for (int t = 0; t < 100; ++t) {
    SortedDataset x(Normals(100, 900 + t), 1e-12);
    mixed_total += static_cast<double>(release_multi(x, mixed_plan, rng).max_gap);
    pure_total += static_cast<double>(release_multi(x, pure_plan, rng).max_gap);
  }
  bool ok = mixed_total <= 2.0 * pure_total;
  Report(11, "adversarial priors mixed at lambda=0.1 stay within 2x", ok,
         Fmt("mixed mean=%.2f vs 2x pure mean=%.2f", mixed_total / 100,
             2.0 * pure_total / 100));
}

TEST_CASE("criterion 12: sensitivity and noise-scale formulas") {
  double sens = sensitivity_discrete(10, 0.1, 0.05);
  double sig = noise_scale(1.0, 1e-6, 1024);
  bool ok = sens == (10.0 / 0.1) * std::expm1(0.05) &&
            std::fabs(sens - 5.1271) < 1e-4 &&
            sig == std::sqrt(2.0 * 10.0 * std::log(1e6)) &&
            std::fabs(sig - 16.622) < 1e-3 &&
            sensitivity_discrete(4, 0.5, 10.0) == 2.0 * 4 / 0.5;
  Report(12, "sensitivity_discrete and noise_scale match hand values", ok,
         Fmt("sens=%.4f, sigma=%.3f", sens, sig));
}
