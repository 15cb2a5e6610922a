#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "vmsched/cli.hpp"
#include "vmsched/config.hpp"
#include "vmsched/metrics.hpp"
#include "vmsched/sched.hpp"

using namespace vmsched;
using vmsched::testing::data_path;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vmsched");
  return run_command(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("run writes NDJSON, summary and charts") {
  vmsched::testing::TempDir dir;
  const auto trace = dir.path() / "t.csv";
  REQUIRE(cli({"gen-trace", "--gen-config", data_path("gen_recovering.yaml"), "--out", trace.string()}) == 0);
  REQUIRE(cli({"validate-trace", trace.string()}) == 0);
  const auto out = dir.path() / "out";
  CHECK(cli({"run", "--config", data_path("reference_expansion.yaml"), "--scenario", "expansion", "--trace",
             trace.string(), "--policy", "best-fit", "--out", out.string()}) == 0);
  CHECK(fs::exists(out / "episode.ndjson"));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "report.html"));
  CHECK(fs::exists(out / "charts"));

  std::ifstream in(out / "episode.ndjson");
  const auto rec = parse_ndjson(in);
  CHECK(rec.header.policy == "best-fit");
  CHECK(rec.header.scenario == "expansion");
  REQUIRE_FALSE(rec.steps.empty());
  CHECK(rec.steps.back().done);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary["total_scheduled"].get<std::size_t>() == summarize(rec).total_scheduled);
}

TEST_CASE("exit codes for domain and usage errors") {
  vmsched::testing::TempDir dir;
  CHECK(cli({"validate-trace", data_path("release_before_alloc.csv")}) == kExitDomainError);
  CHECK(cli({"trace-stats", data_path("release_before_alloc.csv")}) == kExitDomainError);
  CHECK(cli({"run", "--config", data_path("recovering_n10.yaml"), "--scenario", "recovering", "--gen-config",
             data_path("gen_recovering.yaml"), "--policy", "worst-fit", "--out", dir.path().string()}) == kExitUsage);
  // recovering config (releases on, no threshold) asked to run as expansion
  CHECK(cli({"run", "--config", data_path("recovering_n10.yaml"), "--scenario", "expansion", "--gen-config",
             data_path("gen_recovering.yaml"), "--out", dir.path().string()}) == kExitUsage);
  CHECK(cli({"run", "--config", data_path("recovering_n10.yaml"), "--scenario", "recovering", "--out",
             dir.path().string()}) == kExitUsage);
  CHECK(cli({"run", "--config", "/does/not/exist.yaml", "--scenario", "recovering", "--out",
             dir.path().string()}) == kExitUsage);
  CHECK(cli({"frobnicate"}) == kExitUsage);
  CHECK(cli({}) == kExitUsage);
  // a fading run over a trace containing releases
  CHECK(cli({"run", "--config", data_path("fading_n10.yaml"), "--scenario", "fading", "--gen-config",
             data_path("gen_recovering.yaml"), "--out", dir.path().string()}) == kExitDomainError);
  CHECK(cli({"--help"}) == 0);
}

TEST_CASE("compare runs k x s episodes and is byte-identical across invocations") {
  vmsched::testing::TempDir dir;
  const std::vector<std::string> base{"compare",      "--config",     data_path("recovering_n10.yaml"),
                                      "--scenario",   "recovering",   "--gen-config",
                                      data_path("gen_recovering.yaml"), "--policy", "first-fit,best-fit,random",
                                      "--seeds",      "1,2,3,4"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", (dir.path() / "a").string(), "--jobs", "1"});
  b.insert(b.end(), {"--out", (dir.path() / "b").string(), "--jobs", "4"});
  REQUIRE(cli(a) == 0);
  REQUIRE(cli(b) == 0);

  const auto ra = sorted_files(dir.path() / "a" / "records");
  const auto rb = sorted_files(dir.path() / "b" / "records");
  CHECK(ra.size() == 12);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].filename() == rb[i].filename());
    CHECK(slurp(ra[i]) == slurp(rb[i]));
  }
  CHECK(slurp(dir.path() / "a" / "comparison.json") == slurp(dir.path() / "b" / "comparison.json"));
  CHECK(slurp(dir.path() / "a" / "comparison.csv") == slurp(dir.path() / "b" / "comparison.csv"));

  const auto table = nlohmann::json::parse(slurp(dir.path() / "a" / "comparison.json"));
  CHECK(table["runs"].size() == 12);
  CHECK(table["policies"].size() == 3);
  CHECK(table["digests_match"] == true);
  CHECK(fs::exists(dir.path() / "a" / "charts" / "overlay_cpu_used_frac.svg"));
}

TEST_CASE("gen-trace and trace-stats") {
  vmsched::testing::TempDir dir;
  const auto t1 = dir.path() / "a.csv", t2 = dir.path() / "b.csv", t3 = dir.path() / "c.csv";
  REQUIRE(cli({"gen-trace", "--gen-config", data_path("gen_recovering.yaml"), "--out", t1.string()}) == 0);
  REQUIRE(cli({"gen-trace", "--gen-config", data_path("gen_recovering.yaml"), "--out", t2.string()}) == 0);
  REQUIRE(cli({"gen-trace", "--gen-config", data_path("gen_recovering.yaml"), "--out", t3.string(), "--seed",
               "99"}) == 0);
  CHECK(slurp(t1) == slurp(t2));
  CHECK(slurp(t1) != slurp(t3));
  const auto trace = parse_trace_file(t1.string());
  CHECK(trace_stats(trace).n_alloc == 1500);
  CHECK(cli({"trace-stats", t1.string()}) == 0);
  CHECK(cli({"validate-trace", t1.string(), "--config", data_path("recovering_n10.yaml")}) == 0);
}

TEST_CASE("train writes loadable weights usable as a policy") {
  vmsched::testing::TempDir dir;
  const auto w = dir.path() / "w.json";
  REQUIRE(cli({"train", "--config", data_path("recovering_n10.yaml"), "--scenario", "recovering", "--gen-config",
               data_path("gen_recovering.yaml"), "--episodes", "3", "--out", w.string()}) == 0);
  const auto weights = load_linear_q(w);
  for (double x : weights) CHECK(std::isfinite(x));
  CHECK(cli({"run", "--config", data_path("recovering_n10.yaml"), "--scenario", "recovering", "--gen-config",
             data_path("gen_recovering.yaml"), "--policy", "linear-q:" + w.string(), "--out",
             (dir.path() / "run").string()}) == 0);
  CHECK(cli({"train", "--config", data_path("recovering_n10.yaml"), "--scenario", "recovering", "--gen-config",
             data_path("gen_recovering.yaml"), "--discount", "2", "--out", w.string()}) == kExitUsage);
  CHECK(is_known_policy_spec("linear-q:" + w.string()));
  CHECK_FALSE(is_known_policy_spec("linear-q:"));
  CHECK(make_policy("linear-q:" + w.string(), 0)->name() == "linear-q:w");
}

TEST_CASE("bench reports throughput") {
  BenchOptions o;
  o.servers = 10;
  o.steps = 2000;
  const auto r = run_benchmark(o);
  CHECK(r.steps >= 2000);
  CHECK(r.steps_per_second > 0.0);
  CHECK(cli({"bench", "--servers", "10", "--steps", "1000"}) == 0);
  CHECK(cli({"bench", "--policy", "nope"}) == kExitUsage);
}

TEST_CASE("replay-actions matches a direct environment run") {
  vmsched::testing::TempDir dir;
  const auto out = dir.path() / "replay.ndjson";
  REQUIRE(cli({"replay-actions", "--config", data_path("recovering_n10.yaml"), "--scenario", "recovering",
               "--gen-config", data_path("gen_recovering.yaml"), "--actions", "0,3,5,2,19", "--out",
               out.string()}) == 0);
  std::istringstream in(slurp(out));
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 6);
  CHECK(lines[0]["reset"]["done"] == false);
  CHECK(lines[0]["reset"]["mask"].size() == 20);

  const auto cfg = load_env_config(data_path("recovering_n10.yaml"));
  auto gen = load_gen_config(data_path("gen_recovering.yaml"));
  gen.seed += cfg.seed;
  Environment env;
  env.reset(cfg, Scenario::Recovering, std::make_shared<const Trace>(generate_trace(gen)));
  const std::vector<std::size_t> script{0, 3, 5, 2, 19};
  for (std::size_t i = 0; i < script.size(); ++i) {
    const auto r = env.step(script[i]);
    CHECK(lines[i + 1]["reward"].get<double>() == r.reward);
    CHECK(lines[i + 1]["done"].get<bool>() == r.done);
    CHECK(lines[i + 1]["obs"].get<std::vector<float>>() == r.obs.normalized_flat());
  }
}
