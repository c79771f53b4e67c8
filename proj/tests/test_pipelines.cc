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
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dpq/pipelines.h"

using namespace dpq;

namespace {
std::string WriteTemp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/dpq_test_" + name;
  std::ofstream out(path);
  out << content;
  out.close();
  return path;
}
}  // namespace

TEST_CASE("config json round trip") {
  ExperimentConfig cfg;
  cfg.task = "pubpri";
  cfg.m = 5;
  cfg.epsilons = {0.5, 2.0};
  cfg.trials = 7;
  cfg.seed = 99;
  cfg.methods = {"uniform", "pubfit"};
  cfg.lambda = 0.25;
  cfg.arity = 3;
  nlohmann::json j = cfg.ToJson();
  ExperimentConfig back = ExperimentConfig::FromJson(j);
  CHECK(back.ToJson() == j);
  CHECK(back.m == 5);
  CHECK(back.trials == 7);
  CHECK(back.methods == cfg.methods);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(ExperimentConfig::FromJson({{"no_such_field", 1}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::FromJson({{"trials", 0}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::FromJson({{"epsilons", {-1.0}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::FromJson({{"task", "banana"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::FromJson({{"methods", {"no-such-method"}}}),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::FromJson({{"m", "three"}}), ConfigError);
  ExperimentConfig ok = ExperimentConfig::FromJson({{"m", 3}, {"seed", 5}});
  CHECK(ok.m == 3);
  CHECK(ok.seed == 5);
}

TEST_CASE("synthetic generator") {
  SUBCASE("noiseless counts") {
    RandomSource rng(1);
    SyntheticData d = generate_synthetic(20, 9, 0.0, rng);
    REQUIRE(d.datasets.size() == 20);
    REQUIRE(d.features.size() == 20);
    REQUIRE(d.truth.size() == 20);
    for (const auto& day : d.datasets) CHECK(day.size() == 100);
    for (const auto& f : d.features) CHECK(f.size() == 10);
    for (const auto& tr : d.truth) CHECK(tr.size() == 9);
  }
  SUBCASE("noiseless medians straddle the truth") {
    RandomSource rng(2);
    SyntheticData d = generate_synthetic(50, 1, 0.0, rng);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> day = d.datasets[t];
      std::sort(day.begin(), day.end());
      REQUIRE(day.size() == 100);
      CHECK(day[49] < d.truth[t][0]);
      CHECK(day[50] > d.truth[t][0]);
    }
  }
  SUBCASE("poisson cell counts") {
    RandomSource rng(3);
    SyntheticData d = generate_synthetic(1000, 9, 5.0, rng);
    double total = 0;
    for (const auto& day : d.datasets) total += static_cast<double>(day.size());
    double mean_cell = total / (1000.0 * 10.0);
    CHECK(mean_cell == doctest::Approx(15.0).epsilon(0.2 / 15.0));
  }
}

TEST_CASE("pubfit examples") {
  ExperimentConfig cfg;
  cfg.n = 50;
  cfg.sigma_min = 0.05;
  QuantileList qs({0.5});
  SUBCASE("public smaller than one block errors") {
    RandomSource rng(1);
    CHECK_THROWS_AS(pubfit({1.0, 2.0}, 50, qs, cfg, rng), Error);
  }
  SUBCASE("near point mass fits its location") {
    // A wide v-box so the sharp fitted scale does not cap <v,f>/phi below 3.
    cfg.B = 100;
    std::vector<double> pub;
    RandomSource noise(4);
    for (int i = 0; i < 20000; ++i) pub.push_back(3.0 + 0.01 * noise.Normal());
    RandomSource rng(5);
    std::vector<Prior> priors = pubfit(pub, 50, qs, cfg, rng);
    REQUIRE(priors.size() == 1);
    nlohmann::json j = priors[0].ToJson();
    double loc = j.at("location").get<double>();
    double scale = j.at("scale").get<double>();
    // The fitted location lands within one fitted scale of the point mass.
    CHECK(std::fabs(loc - 3.0) < scale);
    CHECK(std::fabs(loc - 3.0) < 1.0);
  }
  SUBCASE("standard normal public data centers the median prior") {
    std::vector<double> pub;
    RandomSource gen(6);
    for (int i = 0; i < 10000; ++i) pub.push_back(gen.Normal());
    RandomSource rng(7);
    std::vector<Prior> priors = pubfit(pub, 50, qs, cfg, rng);
    double loc = priors[0].ToJson().at("location").get<double>();
    CHECK(std::fabs(loc) < 0.1);
  }
}

TEST_CASE("public baselines") {
  std::vector<double> pub = {5, 3, 1, 4, 2};
  QuantileList qs({0.5});
  std::vector<double> q = public_quantiles(pub, qs);
  REQUIRE(q.size() == 1);
  CHECK(q[0] == 3.0);
  std::vector<Prior> priors = public_cauchy(pub, qs, 5.0);
  REQUIRE(priors.size() == 1);
  nlohmann::json j = priors[0].ToJson();
  CHECK(j.at("family") == "cauchy");
  CHECK(j.at("location").get<double>() == 3.0);
  CHECK(j.at("scale").get<double>() == 5.0);
  std::vector<Prior> three = public_cauchy(pub, QuantileList::Uniform(3), 1.0);
  CHECK(three.size() == 3);
}

TEST_CASE("run_pubpri direct outputs and determinism") {
  ExperimentConfig cfg;
  cfg.m = 1;
  cfg.quantiles = {0.5};
  std::vector<double> pub = {1, 2, 3, 4, 5};
  std::vector<std::vector<double>> privs = {{1, 2, 3, 4, 5}, {2, 3, 4, 5, 6}};
  RandomSource r1(9);
  auto recs = run_pubpri(pub, privs, "public-quantiles", 1.0, cfg, r1);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].max_gap == 0);  // released 3 lies in the optimal interval (2,3]
  CHECK(recs[0].method == "public-quantiles");
  RandomSource r2(11), r3(11);
  auto a = run_pubpri(pub, privs, "uniform", 1.0, cfg, r2);
  auto b = run_pubpri(pub, privs, "uniform", 1.0, cfg, r3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].gaps == b[i].gaps);
    CHECK(a[i].max_gap == b[i].max_gap);
  }
}

TEST_CASE("sequential static-uniform replicates manual release calls") {
  ExperimentConfig cfg;
  cfg.m = 3;
  cfg.uniform_lo = -10;
  cfg.uniform_hi = 10;
  RandomSource gen(31);
  std::vector<std::vector<double>> datasets;
  for (int t = 0; t < 5; ++t) {
    std::vector<double> day;
    for (int i = 0; i < 40; ++i) day.push_back(gen.Normal() * 2);
    datasets.push_back(day);
  }
  RandomSource r1(77);
  auto recs = run_sequential(datasets, {}, "static-uniform", 1.0, cfg, r1);
  REQUIRE(recs.size() == 5);
  QuantileList qs = cfg.Quantiles();
  RandomSource r2(77);
  for (int t = 0; t < 5; ++t) {
    SortedDataset x(datasets[t], cfg.tie_jitter);
    std::vector<Prior> priors(3, Prior::MakeUniform(-10, 10));
    RandomSource day_rng = r2.Split(t + 1);
    ReleaseResult res =
        release_multi(x, make_plan(qs, 1.0, cfg, priors), day_rng);
    CHECK(recs[t].gaps ==
          std::vector<std::int64_t>(
              res.gaps.begin(), res.gaps.end()));
    CHECK(recs[t].max_gap == res.max_gap);
    CHECK(recs[t].trial == t);
  }
  // Deterministic replay.
  RandomSource r3(77);
  auto again = run_sequential(datasets, {}, "static-uniform", 1.0, cfg, r3);
  for (int t = 0; t < 5; ++t) CHECK(again[t].gaps == recs[t].gaps);
}

TEST_CASE("sequential learner methods run and record every day") {
  ExperimentConfig cfg;
  cfg.m = 3;
  cfg.granularity = 0.1;
  cfg.days = 20;
  RandomSource gen(13);
  SyntheticData d = generate_synthetic(20, 3, 0.0, gen);
  for (const char* method :
       {"pubprev", "pubprox", "dpftrl", "nonprivate", "static-cauchy",
        "static-halfcauchy"}) {
    RandomSource rng(50);
    auto recs = run_sequential(d.datasets, d.features, method, 1.0, cfg, rng);
    REQUIRE(recs.size() == 20);
    for (const auto& r : recs) {
      CHECK(r.method == method);
      CHECK(r.gaps.size() == 3);
      for (auto g : r.gaps) CHECK(g >= 0);
    }
  }
}

TEST_CASE("robust mixing keeps the guaranteed mass floor") {
  SortedDataset x({-2, -1, 0, 1, 2});
  Prior adversarial = Prior::MakeLaplace(1e6, 1.0);
  Prior robust = Prior::MakeCauchy(0, 1);
  double lambda = 0.1;
  Prior mixed = mix(adversarial, robust, lambda);
  double floor = lambda * psi_limit(x, 0.5, robust).value;
  CHECK(psi_limit(x, 0.5, mixed).value >= floor - 1e-15);
  CHECK(psi_limit(x, 0.5, mixed).value ==
        doctest::Approx(floor).epsilon(1e-9));  // adversarial part has no mass
}

TEST_CASE("aggregate examples") {
  auto rec = [](const std::string& m, double eps, std::int64_t gap) {
    TrialRecord r;
    r.method = m;
    r.epsilon = eps;
    r.gaps = {gap};
    r.max_gap = gap;
    return r;
  };
  SUBCASE("single record") {
    auto rows = aggregate({rec("a", 1.0, 4)});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean_max_gap == 4.0);
    CHECK(rows[0].median_max_gap == 4.0);
    CHECK(rows[0].p5 == 4.0);
    CHECK(rows[0].p95 == 4.0);
  }
  SUBCASE("mean and median") {
    auto rows = aggregate({rec("a", 1.0, 0), rec("a", 1.0, 2), rec("a", 1.0, 4)});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean_max_gap == doctest::Approx(2.0));
    CHECK(rows[0].median_max_gap == doctest::Approx(2.0));
  }
  SUBCASE("nearest-rank p95") {
    std::vector<TrialRecord> recs;
    for (int i = 1; i <= 100; ++i) recs.push_back(rec("a", 1.0, i));
    auto rows = aggregate(recs);
    CHECK(rows[0].p95 == doctest::Approx(95.0));
    CHECK(rows[0].p5 == doctest::Approx(5.0));
  }
  SUBCASE("grouping preserves first appearance order") {
    auto rows = aggregate({rec("b", 1.0, 1), rec("a", 1.0, 2), rec("b", 2.0, 3)});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].method == "b");
    CHECK(rows[0].epsilon == 1.0);
    CHECK(rows[1].method == "a");
    CHECK(rows[2].epsilon == 2.0);
  }
}

TEST_CASE("summary csv header") {
  std::string csv = summary_csv(aggregate([] {
    TrialRecord r;
    r.method = "uniform";
    r.epsilon = 1.0;
    r.gaps = {2};
    r.max_gap = 2;
    return std::vector<TrialRecord>{r};
  }()));
  CHECK(csv.rfind("method,epsilon,mean_max_gap,median_max_gap,p5,p95\n", 0) == 0);
  CHECK(csv.find("uniform,1") != std::string::npos);
}

TEST_CASE("csv ingestion") {
  SUBCASE("single group sorted") {
    std::string p = WriteTemp("simple.csv", "value\n3\n1\n2\n");
    IngestResult r = ingest_csv(p, "value", {}, "", "average");
    REQUIRE(r.datasets.size() == 1);
    CHECK(SortedDataset(r.datasets[0]).values() == std::vector<double>{1, 2, 3});
  }
  SUBCASE("bad value cites its line") {
    std::string p =
        WriteTemp("bad.csv", "value\n1\n2\n3\n4\n5\nabc\n7\n");
    try {
      ingest_csv(p, "value", {}, "", "average");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 7") != std::string::npos);
    }
  }
  SUBCASE("groups in first-appearance order with features") {
    std::string p = WriteTemp(
        "groups.csv",
        "date,value,f0\n2020-01-02,1,1.0\n2020-01-01,2,3.0\n2020-01-02,3,2.0\n");
    IngestResult r = ingest_csv(p, "value", {"f0"}, "date", "average");
    REQUIRE(r.groups.size() == 2);
    CHECK(r.groups[0] == "2020-01-02");
    CHECK(r.groups[1] == "2020-01-01");
    CHECK(r.datasets[0] == std::vector<double>{1, 3});
    CHECK(r.datasets[1] == std::vector<double>{2});
    CHECK(r.features[0] == std::vector<double>{1.5});  // averaged
    IngestResult rf = ingest_csv(p, "value", {"f0"}, "date", "first");
    CHECK(rf.features[0] == std::vector<double>{1.0});
  }
  SUBCASE("missing column") {
    std::string p = WriteTemp("missing.csv", "value\n1\n");
    CHECK_THROWS_AS(ingest_csv(p, "nope", {}, "", "average"), ConfigError);
  }
  SUBCASE("empty file") {
    std::string p = WriteTemp("empty.csv", "value\n");
    CHECK_THROWS_AS(ingest_csv(p, "value", {}, "", "average"), DataError);
  }
}

TEST_CASE("trial record serialization") {
  TrialRecord r;
  r.method = "uniform";
  r.epsilon = 0.5;
  r.trial = 3;
  r.gaps = {1, 0, 2};
  r.max_gap = 2;
  r.wall_ms = 12.5;
  nlohmann::json j = r.ToJson();
  CHECK(j.at("method") == "uniform");
  CHECK(j.at("epsilon").get<double>() == 0.5);
  CHECK(j.at("trial").get<int>() == 3);
  CHECK(j.at("max_gap").get<int>() == 2);
  CHECK(!j.contains("wall_ms"));
}
