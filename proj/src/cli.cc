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
#include "dpq/cli.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dpq/learning.h"
#include "dpq/losses.h"
#include "dpq/mechanisms.h"
#include "dpq/pipelines.h"
#include "dpq/priors.h"

namespace dpq {
namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config_path;
  std::string epsilon;
  int m = 0;
  std::string quantiles;
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<std::string> methods;
  std::string out;
  std::string format;
  int threads = 0;
  std::string input;
};

void AddCommonFlags(CLI::App* cmd, Flags* f) {
  cmd->add_option("--config", f->config_path, "JSON config file");
  cmd->add_option("--epsilon", f->epsilon, "comma-separated privacy budgets");
  cmd->add_option("--m", f->m, "number of quantiles (uniformly spaced)");
  cmd->add_option("--quantiles", f->quantiles,
                  "comma list of quantiles, or uniform:m");
  cmd->add_option("--seed", f->seed, "random seed");
  cmd->add_option("--trials", f->trials, "number of trials");
  cmd->add_option("--method", f->methods, "method name (repeatable)");
  cmd->add_option("--out", f->out, "output directory");
  cmd->add_option("--format", f->format, "record format: jsonl or csv");
  cmd->add_option("--threads", f->threads, "worker cap");
  cmd->add_option("--input", f->input, "input CSV file");
}

std::vector<double> ParseDoubleList(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string token;
  while (std::getline(ss, token, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != token.size() || token.empty()) {
      throw ConfigError("cannot parse " + what + " entry '" + token + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(what + " list is empty");
  return out;
}

nlohmann::json LoadConfigJson(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  return j;
}

ExperimentConfig ResolveConfig(const Flags& f, const std::string& task,
                               const CLI::App* cmd) {
  nlohmann::json j = LoadConfigJson(f.config_path);
  j["task"] = task;
  if (cmd->count("--epsilon")) j["epsilons"] = ParseDoubleList(f.epsilon, "epsilon");
  if (cmd->count("--m")) {
    j["m"] = f.m;
    j["quantiles"] = nlohmann::json::array();
  }
  if (cmd->count("--quantiles")) {
    if (f.quantiles.rfind("uniform:", 0) == 0) {
      std::string tail = f.quantiles.substr(8);
      std::size_t pos = 0;
      int m = 0;
      try {
        m = std::stoi(tail, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != tail.size() || m < 1) {
        throw ConfigError("bad --quantiles value '" + f.quantiles + "'");
      }
      j["m"] = m;
      j["quantiles"] = nlohmann::json::array();
    } else {
      j["quantiles"] = ParseDoubleList(f.quantiles, "quantiles");
    }
  }
  if (cmd->count("--seed")) j["seed"] = f.seed;
  if (cmd->count("--trials")) j["trials"] = f.trials;
  if (cmd->count("--method")) j["methods"] = f.methods;
  if (cmd->count("--format")) j["format"] = f.format;
  if (cmd->count("--threads")) j["threads"] = f.threads;
  if (cmd->count("--input")) j["data_path"] = f.input;
  return ExperimentConfig::FromJson(j);
}

std::vector<double> GenNormal(int count, std::uint64_t seed) {
  RandomSource rng(seed);
  std::vector<double> out(count);
  for (double& v : out) v = rng.Normal();
  return out;
}

void EmitResults(const ExperimentConfig& cfg,
                 const std::vector<TrialRecord>& records,
                 const std::string& out_dir) {
  std::vector<SummaryRow> rows = aggregate(records);
  std::string summary = summary_csv(rows);
  std::cout << summary;
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  if (cfg.format == "jsonl") {
    std::ofstream rec(fs::path(out_dir) / "records.jsonl");
    for (const TrialRecord& r : records) rec << r.ToJson().dump() << '\n';
  } else {
    std::ofstream rec(fs::path(out_dir) / "records.csv");
    rec << "method,epsilon,trial,max_gap,gaps\n";
    for (const TrialRecord& r : records) {
      rec << r.method << ',' << r.epsilon << ',' << r.trial << ',' << r.max_gap
          << ',';
      for (std::size_t i = 0; i < r.gaps.size(); ++i) {
        if (i) rec << ';';
        rec << r.gaps[i];
      }
      rec << '\n';
    }
  }
  std::ofstream sum(fs::path(out_dir) / "summary.csv");
  sum << summary;
  std::ofstream conf(fs::path(out_dir) / "config.resolved");
  conf << cfg.ToJson().dump(2) << '\n';
}

std::vector<std::string> DefaultMethods(const std::string& task) {
  if (task == "pubpri") {
    return {"uniform", "public-quantiles", "public-cauchy", "pubfit",
            "pubfit-robust"};
  }
  if (task == "sequential") return {"static-uniform", "pubprev", "pubprox"};
  return {"uniform"};
}

int RunOneshot(const ExperimentConfig& cfg) {
  std::vector<std::vector<double>> privates;
  if (!cfg.data_path.empty()) {
    IngestResult ing =
        ingest_csv(cfg.data_path,
                   cfg.value_column.empty() ? "value" : cfg.value_column,
                   cfg.feature_columns, cfg.group_column, cfg.feature_mode);
    privates.assign(cfg.trials, ing.datasets[0]);
  } else {
    for (int t = 0; t < cfg.trials; ++t) {
      privates.push_back(
          GenNormal(cfg.n, RandomSource::SubSeed(cfg.seed, 0x100000u + t)));
    }
  }
  std::vector<std::string> methods =
      cfg.methods.empty() ? DefaultMethods(cfg.task) : cfg.methods;
  std::vector<TrialRecord> records;
  std::uint64_t combo = 0;
  for (const std::string& method : methods) {
    for (double eps : cfg.epsilons) {
      RandomSource rng(RandomSource::SubSeed(cfg.seed, combo++));
      std::vector<TrialRecord> part =
          run_pubpri({}, privates, method, eps, cfg, rng);
      records.insert(records.end(), part.begin(), part.end());
    }
  }
  EmitResults(cfg, records, cfg.out_dir);
  return 0;
}

int RunPubpri(const ExperimentConfig& cfg) {
  std::vector<double> public_values;
  std::vector<std::vector<double>> privates;
  if (!cfg.data_path.empty()) {
    IngestResult ing =
        ingest_csv(cfg.data_path,
                   cfg.value_column.empty() ? "value" : cfg.value_column,
                   cfg.feature_columns, cfg.group_column, cfg.feature_mode);
    if (ing.datasets.size() < 2) {
      throw DataError(
          "pubpri input needs a public group followed by private groups");
    }
    public_values = ing.datasets[0];
    privates.assign(ing.datasets.begin() + 1, ing.datasets.end());
  } else {
    public_values = GenNormal(cfg.public_n, RandomSource::SubSeed(cfg.seed, 0xB0B));
    for (int t = 0; t < cfg.trials; ++t) {
      privates.push_back(
          GenNormal(cfg.n, RandomSource::SubSeed(cfg.seed, 0x100000u + t)));
    }
  }
  std::vector<std::string> methods =
      cfg.methods.empty() ? DefaultMethods(cfg.task) : cfg.methods;
  std::vector<TrialRecord> records;
  std::uint64_t combo = 0;
  for (const std::string& method : methods) {
    for (double eps : cfg.epsilons) {
      RandomSource rng(RandomSource::SubSeed(cfg.seed, combo++));
      std::vector<TrialRecord> part =
          run_pubpri(public_values, privates, method, eps, cfg, rng);
      records.insert(records.end(), part.begin(), part.end());
    }
  }
  EmitResults(cfg, records, cfg.out_dir);
  return 0;
}

int RunSequential(const ExperimentConfig& cfg) {
  std::vector<std::vector<double>> datasets;
  std::vector<std::vector<double>> features;
  if (!cfg.data_path.empty()) {
    IngestResult ing =
        ingest_csv(cfg.data_path,
                   cfg.value_column.empty() ? "value" : cfg.value_column,
                   cfg.feature_columns, cfg.group_column, cfg.feature_mode);
    datasets = ing.datasets;
    features = ing.features;
  } else {
    RandomSource gen(RandomSource::SubSeed(cfg.seed, 0xA11));
    SyntheticData synth = generate_synthetic(
        cfg.days, cfg.Quantiles().m(), cfg.synth_noise, gen, cfg.synth_dim);
    datasets = std::move(synth.datasets);
    features = std::move(synth.features);
  }
  std::vector<std::string> methods =
      cfg.methods.empty() ? DefaultMethods(cfg.task) : cfg.methods;
  std::vector<TrialRecord> records;
  std::uint64_t combo = 0;
  for (const std::string& method : methods) {
    for (double eps : cfg.epsilons) {
      RandomSource rng(RandomSource::SubSeed(cfg.seed, combo++));
      std::vector<TrialRecord> part =
          run_sequential(datasets, features, method, eps, cfg, rng);
      records.insert(records.end(), part.begin(), part.end());
    }
  }
  EmitResults(cfg, records, cfg.out_dir);
  return 0;
}

int RunSynth(const ExperimentConfig& cfg) {
  RandomSource gen(RandomSource::SubSeed(cfg.seed, 0xA11));
  SyntheticData synth = generate_synthetic(
      cfg.days, cfg.Quantiles().m(), cfg.synth_noise, gen, cfg.synth_dim);
  std::ostringstream os;
  os << "day,value";
  for (int k = 0; k < cfg.synth_dim; ++k) os << ",f" << k;
  os << '\n';
  os.precision(12);
  for (std::size_t t = 0; t < synth.datasets.size(); ++t) {
    for (double v : synth.datasets[t]) {
      os << t << ',' << v;
      for (double fv : synth.features[t]) os << ',' << fv;
      os << '\n';
    }
  }
  if (cfg.out_dir.empty()) {
    std::cout << os.str();
  } else {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "synth.csv");
    out << os.str();
    std::ofstream conf(fs::path(cfg.out_dir) / "config.resolved");
    conf << cfg.ToJson().dump(2) << '\n';
  }
  return 0;
}

int RunSelftest() {
  int passed = 0;
  int failed = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    (ok ? passed : failed)++;
  };

  {
    SortedDataset x({1, 2, 3, 4, 5});
    check("gap at interior point is zero", gap(x, 0.5, 2.5) == 0);
    Interval opt = optimal_interval(x, 0.5);
    check("optimal interval is (x_[r], x_[r+1]]",
          opt.lo == 2.0 && opt.hi == 3.0);
  }
  {
    Prior a = Prior::MakeUniform(0, 1);
    Prior b = Prior::MakeCauchy(0, 1);
    Prior m = mix(a, b, 0.25);
    Interval I{0.2, 0.7};
    double want = 0.75 * a.Mass(I) + 0.25 * b.Mass(I);
    check("mixture mass is exactly linear", std::fabs(m.Mass(I) - want) < 1e-15);
  }
  {
    SortedDataset x({1, 2, 3, 4, 5, 6, 7, 8});
    ReleasePlan plan;
    plan.qs = QuantileList::Uniform(7);
    plan.epsilon = 1.0;
    plan.arity = 2;
    plan.adaptation = Adaptation::kConditional;
    plan.priors.assign(7, Prior::MakeUniform(0, 9));
    RandomSource r1(42), r2(42);
    ReleaseResult a = release_multi(x, plan, r1);
    ReleaseResult b = release_multi(x, plan, r2);
    check("release is deterministic under a fixed seed", a.outputs == b.outputs);
    bool sorted = std::is_sorted(a.outputs.begin(), a.outputs.end());
    check("released quantiles are sorted", sorted);
    double root_sum = 0.0;
    for (const BudgetLogEntry& e : a.budget_log) {
      if (e.parent_id == -1) root_sum = e.per_call_epsilon;
    }
    check("root consumes a positive budget", root_sum > 0.0);
  }
  {
    Prior lap = Prior::MakeLaplace(2.0, 0.5);
    double direct = -std::log(lap.Mass(Interval{1.5, 2.5}));
    double closed = laplace_loss(1.5, 2.5, 2.0 * 2.0, 2.0);
    check("closed-form loss matches prior mass", std::fabs(direct - closed) < 1e-12);
  }
  {
    TreeAggregator agg(64, 0.0, 1e9, 1, RandomSource(7));
    double run = 0.0;
    bool ok = true;
    for (int t = 1; t <= 64; ++t) {
      agg.Add({static_cast<double>(t)});
      run += t;
      ok = ok && agg.Sum(t)[0] == run;
    }
    check("noiseless tree sums are exact", ok);
  }
  {
    std::vector<TrialRecord> recs;
    for (int g : {0, 2, 4}) {
      TrialRecord r;
      r.method = "uniform";
      r.epsilon = 1.0;
      r.max_gap = g;
      recs.push_back(r);
    }
    std::vector<SummaryRow> rows = aggregate(recs);
    check("aggregate mean and median", rows.size() == 1 &&
                                           rows[0].mean_max_gap == 2.0 &&
                                           rows[0].median_max_gap == 2.0);
  }

  std::cout << "selftest: " << passed << " passed, " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int RunCli(const std::vector<std::string>& args) {
  CLI::App app{"Differentially private quantile release with prediction priors"};
  app.require_subcommand(1);

  Flags flags;
  CLI::App* release = app.add_subcommand("release", "one-shot quantile release");
  CLI::App* pubpri = app.add_subcommand("pubpri", "public-private prior fitting");
  CLI::App* sequential =
      app.add_subcommand("sequential", "sequential release over a stream");
  CLI::App* synth = app.add_subcommand("synth", "emit a synthetic dataset");
  CLI::App* selftest = app.add_subcommand("selftest", "run the invariant suite");
  for (CLI::App* cmd : {release, pubpri, sequential, synth}) {
    AddCommonFlags(cmd, &flags);
  }

  std::vector<std::string> argv_strings;
  argv_strings.push_back("dpquant");
  argv_strings.insert(argv_strings.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : argv_strings) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(selftest)) return RunSelftest();
    const CLI::App* cmd = app.get_subcommands().front();
    std::string task = app.got_subcommand(release)
                           ? "oneshot"
                           : app.got_subcommand(pubpri)
                                 ? "pubpri"
                                 : "sequential";  // sequential and synth
    ExperimentConfig cfg = ResolveConfig(flags, task, cmd);
    cfg.out_dir = flags.out;
    if (app.got_subcommand(release)) return RunOneshot(cfg);
    if (app.got_subcommand(pubpri)) return RunPubpri(cfg);
    if (app.got_subcommand(sequential)) return RunSequential(cfg);
    return RunSynth(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dpq
