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
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dpq/cli.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {
std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string TempDir(const std::string& name) {
  fs::path p = fs::path("/tmp") / ("dpq_cli_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string WriteTemp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/dpq_cli_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}
}  // namespace

TEST_CASE("selftest passes") {
  CHECK(dpq::RunCli({"selftest"}) == 0);
}

TEST_CASE("bad invocations") {
  CHECK(dpq::RunCli({"release", "--no-such-flag"}) != 0);
  CHECK(dpq::RunCli({"release", "--method", "no-such-method"}) == 1);
  CHECK(dpq::RunCli({"release", "--quantiles", "uniform:x"}) == 1);
  CHECK(dpq::RunCli({"release", "--epsilon", "-2"}) == 1);
  std::string bad = WriteTemp("bad.json", "{not json");
  CHECK(dpq::RunCli({"release", "--config", bad}) == 1);
}

TEST_CASE("missing input file maps to the data error exit code") {
  CHECK(dpq::RunCli({"release", "--input", "/tmp/definitely_missing.csv"}) == 2);
}

TEST_CASE("release runs are byte-identical for the same seed") {
  std::string a = TempDir("rel_a"), b = TempDir("rel_b");
  std::vector<std::string> base = {"release", "--m",     "3",   "--epsilon",
                                   "0.5,1",   "--trials", "4",  "--seed",
                                   "11",      "--method", "uniform"};
  auto run = [&](const std::string& out) {
    std::vector<std::string> args = base;
    args.push_back("--out");
    args.push_back(out);
    return dpq::RunCli(args);
  };
  REQUIRE(run(a) == 0);
  REQUIRE(run(b) == 0);
  std::string rec_a = ReadFile(fs::path(a) / "records.jsonl");
  CHECK(!rec_a.empty());
  CHECK(rec_a == ReadFile(fs::path(b) / "records.jsonl"));
  CHECK(ReadFile(fs::path(a) / "summary.csv") ==
        ReadFile(fs::path(b) / "summary.csv"));
  nlohmann::json resolved =
      nlohmann::json::parse(ReadFile(fs::path(a) / "config.resolved"));
  CHECK(resolved.at("m") == 3);
  CHECK(resolved.at("seed") == 11);
  CHECK(resolved.at("epsilons") == nlohmann::json({0.5, 1.0}));
  // 2 epsilons x 4 trials x 1 method.
  int lines = 0;
  for (char c : rec_a) lines += c == '\n';
  CHECK(lines == 8);
}

TEST_CASE("quantile flags") {
  std::string out = TempDir("quant");
  REQUIRE(dpq::RunCli({"release", "--quantiles", "uniform:5", "--trials", "1",
                       "--out", out}) == 0);
  nlohmann::json resolved =
      nlohmann::json::parse(ReadFile(fs::path(out) / "config.resolved"));
  CHECK(resolved.at("m") == 5);
  CHECK(resolved.at("quantiles").empty());
  std::string out2 = TempDir("quant2");
  REQUIRE(dpq::RunCli({"release", "--quantiles", "0.1,0.9", "--trials", "1",
                       "--out", out2}) == 0);
  nlohmann::json r2 =
      nlohmann::json::parse(ReadFile(fs::path(out2) / "config.resolved"));
  CHECK(r2.at("quantiles") == nlohmann::json({0.1, 0.9}));
}

TEST_CASE("csv record format") {
  std::string out = TempDir("csv");
  REQUIRE(dpq::RunCli({"release", "--m", "3", "--trials", "2", "--format",
                       "csv", "--out", out}) == 0);
  std::string rec = ReadFile(fs::path(out) / "records.csv");
  CHECK(rec.rfind("method,epsilon,trial,max_gap,gaps\n", 0) == 0);
  // Each record line carries the 3 per-quantile gaps joined by ';'.
  std::istringstream in(rec);
  std::string line;
  std::getline(in, line);
  REQUIRE(std::getline(in, line));
  CHECK(std::count(line.begin(), line.end(), ';') == 2);
  CHECK(!fs::exists(fs::path(out) / "records.jsonl"));
}

TEST_CASE("synth emits a csv dataset") {
  std::string out = TempDir("synth");
  std::string cfg = WriteTemp("synth.json",
                              "{\"m\": 3, \"days\": 4, \"synth_dim\": 2}");
  REQUIRE(dpq::RunCli({"synth", "--config", cfg, "--out", out}) == 0);
  std::string csv = ReadFile(fs::path(out) / "synth.csv");
  CHECK(csv.rfind("day,value,f0,f1\n", 0) == 0);
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 1 + 4 * 100);  // header + 4 days of 100 points
}

TEST_CASE("pubpri and sequential subcommands run end to end") {
  std::string cfg = WriteTemp("seq.json",
                              "{\"m\": 3, \"days\": 5, \"n\": 40,"
                              " \"public_n\": 400}");
  std::string out = TempDir("pubpri");
  REQUIRE(dpq::RunCli({"pubpri", "--config", cfg, "--trials", "2", "--method",
                       "uniform", "--method", "public-quantiles", "--out",
                       out}) == 0);
  std::string summary = ReadFile(fs::path(out) / "summary.csv");
  CHECK(summary.find("uniform,") != std::string::npos);
  CHECK(summary.find("public-quantiles,") != std::string::npos);

  std::string out2 = TempDir("seq");
  REQUIRE(dpq::RunCli({"sequential", "--config", cfg, "--method",
                       "static-uniform", "--method", "pubprev", "--out",
                       out2}) == 0);
  std::string rec = ReadFile(fs::path(out2) / "records.jsonl");
  int lines = 0;
  for (char c : rec) lines += c == '\n';
  CHECK(lines == 2 * 5);  // 2 methods x 5 days
}

TEST_CASE("sequential ingests grouped csv input") {
  std::ostringstream data;
  data << "day,value,f0\n";
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 30; ++i)
      data << "d" << t << ',' << (t + i * 0.1) << ',' << t << '\n';
  std::string input = WriteTemp("seq_input.csv", data.str());
  std::string cfg = WriteTemp(
      "seq_ingest.json",
      "{\"m\": 1, \"value_column\": \"value\", \"group_column\": \"day\","
      " \"feature_columns\": [\"f0\"]}");
  std::string out = TempDir("seq_ingest");
  REQUIRE(dpq::RunCli({"sequential", "--config", cfg, "--input", input,
                       "--method", "static-uniform", "--out", out}) == 0);
  std::string rec = ReadFile(fs::path(out) / "records.jsonl");
  int lines = 0;
  for (char c : rec) lines += c == '\n';
  CHECK(lines == 3);
}
