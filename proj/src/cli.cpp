#include "vmsched/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vmsched/config.hpp"
#include "vmsched/error.hpp"
#include "vmsched/io.hpp"
#include "vmsched/metrics.hpp"
#include "vmsched/sched.hpp"

namespace vmsched {

namespace fs = std::filesystem;

namespace {

// Raised for argument problems discovered after CLI11 parsing succeeded.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> log;
  std::call_once(once, [] {
    log = spdlog::stderr_color_mt("vmsched");
    log->set_level(spdlog::level::warn);
    if (const char* level = std::getenv("VMSCHED_LOG")) log->set_level(spdlog::level::from_str(level));
  });
  return log;
}

std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

Scenario scenario_or_usage(const std::string& name) {
  auto s = parse_scenario(name);
  if (!s) throw UsageError("unknown scenario " + name);
  return *s;
}

struct EpisodeInputs {
  EnvConfig cfg;
  Scenario scenario = Scenario::Fading;
};

EpisodeInputs load_episode_inputs(const std::string& config_path, const std::string& scenario_name,
                                  const std::string& reward_mode) {
  EpisodeInputs in;
  in.cfg = load_env_config(config_path);
  in.scenario = scenario_or_usage(scenario_name);
  if (!reward_mode.empty()) {
    auto mode = parse_reward_mode(reward_mode);
    if (!mode) throw UsageError("unknown reward mode " + reward_mode);
    in.cfg.reward_mode = *mode;
  }
  if (auto problem = check_scenario(in.cfg, in.scenario); !problem.empty())
    throw UsageError("scenario/config mismatch: " + problem);
  return in;
}

void require_policy(const std::string& spec) {
  if (!is_known_policy_spec(spec)) throw UsageError("unknown policy " + spec);
  if (spec.starts_with("linear-q:") && !fs::is_regular_file(spec.substr(9)))
    throw UsageError("weights file not found: " + spec.substr(9));
}

// Trace: either a file, or a synthetic trace from a generator config offset by the run seed.
struct TraceSource {
  std::string trace_path;
  std::string gen_config_path;

  void check() const {
    if (trace_path.empty() == gen_config_path.empty()) throw UsageError("give exactly one of --trace or --gen-config");
  }
  std::shared_ptr<const Trace> load(std::uint64_t seed) const {
    if (!trace_path.empty()) return std::make_shared<const Trace>(parse_trace_file(trace_path));
    auto gen = load_gen_config(gen_config_path);
    gen.seed += seed;
    return std::make_shared<const Trace>(generate_trace(gen));
  }
};

nlohmann::ordered_json summary_to_json(const RunSummary& s) {
  return {{"total_scheduled", s.total_scheduled},       {"episode_length", s.episode_length},
          {"mean_cpu_used_frac", s.mean_cpu_used_frac}, {"max_cpu_used_frac", s.max_cpu_used_frac},
          {"mean_mem_used_frac", s.mean_mem_used_frac}, {"max_mem_used_frac", s.max_mem_used_frac},
          {"total_reward", s.total_reward},             {"expansions", s.expansions}};
}

std::vector<std::uint64_t> seed_list(const std::vector<std::uint64_t>& seeds, std::uint64_t fallback) {
  return seeds.empty() ? std::vector<std::uint64_t>{fallback} : seeds;
}

}  // namespace

bool is_known_policy_spec(const std::string& spec) {
  return spec == "first-fit" || spec == "best-fit" || spec == "random" ||
         (spec.starts_with("linear-q:") && spec.size() > 9);
}

std::unique_ptr<Policy> make_policy(const std::string& spec, std::uint64_t seed) {
  if (spec == "first-fit") return std::make_unique<FirstFitPolicy>();
  if (spec == "best-fit") return std::make_unique<BestFitPolicy>();
  if (spec == "random") return std::make_unique<RandomPolicy>(seed);
  if (spec.starts_with("linear-q:") && spec.size() > 9) {
    const auto path = spec.substr(9);
    return std::make_unique<LinearQPolicy>(load_linear_q(path), "linear-q:" + fs::path(path).stem().string());
  }
  return nullptr;
}

std::vector<std::pair<Flavor, double>> default_flavor_mix() {
  return {{Flavor{1, 2}, 0.25}, {Flavor{2, 4}, 0.25}, {Flavor{4, 8}, 0.2},
          {Flavor{8, 16}, 0.15}, {Flavor{16, 32}, 0.1}, {Flavor{2, 8}, 0.05}};
}

BenchResult run_benchmark(const BenchOptions& opts) {
  EnvConfig cfg;
  cfg.cluster = {opts.servers, opts.cpu, opts.mem, true, 0, 8};
  cfg.allow_release = true;
  cfg.seed = opts.seed;

  GenConfig gen;
  gen.n_alloc = opts.steps;
  gen.release_prob = 1.0;
  gen.mean_lifetime = 400.0;
  gen.flavor_weights = default_flavor_mix();

  BenchResult result;
  std::chrono::steady_clock::duration elapsed{};
  while (result.steps < opts.steps) {
    gen.seed = opts.seed + result.episodes;
    auto trace = std::make_shared<const Trace>(generate_trace(gen));
    auto policy = make_policy(opts.policy, opts.seed + result.episodes);
    if (!policy) throw UsageError("unknown policy " + opts.policy);

    const auto start = std::chrono::steady_clock::now();
    Environment env;
    auto obs = env.reset(cfg, Scenario::Recovering, trace);
    while (!env.done() && result.steps < opts.steps) {
      auto step = env.step(policy->act(obs, env.action_mask()));
      obs = std::move(step.obs);
      ++result.steps;
    }
    elapsed += std::chrono::steady_clock::now() - start;
    ++result.episodes;
  }
  result.seconds = std::chrono::duration<double>(elapsed).count();
  result.steps_per_second = result.seconds > 0.0 ? static_cast<double>(result.steps) / result.seconds : 0.0;
  return result;
}

int run_command(const std::vector<std::string>& argv) {
  CLI::App app{"Trace-driven VM scheduling simulator on double-NUMA clusters", "vmsched"};
  app.require_subcommand(1);

  std::string config_path, scenario_name, policy_spec = "first-fit", out_dir, reward_mode;
  TraceSource source;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_episode_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "YAML environment config")->required()->check(CLI::ExistingFile);
    cmd->add_option("--scenario", scenario_name, "fading | recovering | expansion")
        ->required()
        ->check(CLI::IsMember({"fading", "recovering", "expansion"}));
    cmd->add_option("--trace", source.trace_path, "trace CSV")->check(CLI::ExistingFile);
    cmd->add_option("--gen-config", source.gen_config_path, "synthetic trace generator YAML")
        ->check(CLI::ExistingFile);
    cmd->add_option("--reward-mode", reward_mode, "per-alloc | cpu-delta")
        ->check(CLI::IsMember({"per-alloc", "cpu-delta"}));
  };

  // run
  auto* run = app.add_subcommand("run", "Run one episode and write NDJSON, summary and charts");
  add_episode_flags(run);
  run->add_option("--policy", policy_spec, "first-fit | best-fit | random | linear-q:<weights>");
  run->add_option("--seed", seed, "episode seed (defaults to the config's vmsched_ext.seed)");
  run->add_option("--out", out_dir, "output directory")->required();

  // compare
  std::vector<std::string> policy_specs;
  std::vector<std::uint64_t> seeds;
  unsigned jobs = 0;
  auto* cmp = app.add_subcommand("compare", "Run every policy x seed and write a comparison");
  add_episode_flags(cmp);
  cmp->add_option("--policy", policy_specs, "policy specs, repeated or comma-separated")->required()->delimiter(',');
  cmp->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
  cmp->add_option("--seed", seed, "single seed when --seeds is absent");
  cmp->add_option("--jobs", jobs, "worker threads (0 = hardware concurrency)");
  cmp->add_option("--out", out_dir, "output directory")->required();

  // validate-trace
  std::string trace_path;
  auto* validate = app.add_subcommand("validate-trace", "Check a trace file's invariants");
  validate->add_option("path", trace_path, "trace CSV")->required()->check(CLI::ExistingFile);
  validate->add_option("--config", config_path, "also check flavors against this cluster")
      ->check(CLI::ExistingFile);

  // gen-trace
  std::string gen_path, out_path;
  auto* gen = app.add_subcommand("gen-trace", "Write a synthetic trace");
  gen->add_option("--gen-config", gen_path, "generator YAML")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "output CSV")->required();
  gen->add_option("--seed", seed, "override the generator seed");

  // trace-stats
  auto* stats = app.add_subcommand("trace-stats", "Print trace counts");
  stats->add_option("path", trace_path, "trace CSV")->required()->check(CLI::ExistingFile);

  // train
  LinearQParams lq;
  auto* train = app.add_subcommand("train", "Train the linear Q baseline and write its weights");
  add_episode_flags(train);
  train->add_option("--episodes", lq.episodes, "training episodes");
  train->add_option("--learning-rate", lq.learning_rate);
  train->add_option("--discount", lq.discount);
  train->add_option("--epsilon-start", lq.epsilon_start);
  train->add_option("--epsilon-end", lq.epsilon_end);
  train->add_option("--epsilon-decay", lq.epsilon_decay_steps, "steps over which epsilon decays linearly");
  train->add_option("--seed", seed);
  train->add_option("--out", out_path, "weights JSON")->required();

  // bench
  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("bench", "Measure environment steps per second");
  bench->add_option("--servers", bench_opts.servers);
  bench->add_option("--cpu", bench_opts.cpu);
  bench->add_option("--mem", bench_opts.mem);
  bench->add_option("--steps", bench_opts.steps);
  bench->add_option("--policy", bench_opts.policy);
  bench->add_option("--seed", bench_opts.seed);

  // replay-actions
  std::vector<std::size_t> actions;
  auto* replay = app.add_subcommand("replay-actions", "Drive one episode with a fixed flat-action script");
  add_episode_flags(replay);
  replay->add_option("--actions", actions, "comma-separated flat action indices")->delimiter(',');
  replay->add_option("--seed", seed);
  replay->add_option("--out", out_path, "NDJSON output, - for stdout")->required();

  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "vmsched: " << e.what() << "\n";
    return kExitUsage;
  }
  for (auto* cmd : {run, cmp, train, replay, gen})
    if (cmd->parsed() && cmd->count("--seed") > 0) seed_given = true;

  auto log = logger();
  try {
    if (run->parsed()) {
      source.check();
      require_policy(policy_spec);
      auto in = load_episode_inputs(config_path, scenario_name, reward_mode);
      if (seed_given) in.cfg.seed = seed;
      auto trace = source.load(in.cfg.seed);
      auto policy = make_policy(policy_spec, in.cfg.seed);
      log->info("run {} {} seed {}", scenario_name, policy->name(), in.cfg.seed);

      const auto record = run_episode(in.cfg, in.scenario, std::move(trace), *policy);
      const auto summary = summarize(record);
      write_file_atomic(fs::path(out_dir) / "episode.ndjson", to_ndjson(record));
      write_file_atomic(fs::path(out_dir) / "summary.json", summary_to_json(summary).dump(2) + "\n");
      render_charts({record}, out_dir);
      std::cout << summary_to_json(summary).dump() << "\n";
      return kExitOk;
    }

    if (cmp->parsed()) {
      source.check();
      for (const auto& p : policy_specs) require_policy(p);
      auto in = load_episode_inputs(config_path, scenario_name, reward_mode);
      const auto run_seeds = seed_list(seeds, seed_given ? seed : in.cfg.seed);

      std::vector<std::shared_ptr<const Trace>> traces;
      for (auto s : run_seeds) traces.push_back(source.load(s));

      const std::size_t total = policy_specs.size() * run_seeds.size();
      std::vector<EpisodeRecord> records(total);
      std::vector<std::string> errors(total);
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t k = next++; k < total; k = next++) {
          const auto pi = k / run_seeds.size();
          const auto si = k % run_seeds.size();
          try {
            auto cfg = in.cfg;
            cfg.seed = run_seeds[si];
            auto policy = make_policy(policy_specs[pi], cfg.seed);
            records[k] = run_episode(cfg, in.scenario, traces[si], *policy);
          } catch (const std::exception& e) {
            errors[k] = e.what();
          }
        }
      };
      const unsigned n_threads =
          std::max(1u, std::min<unsigned>(jobs ? jobs : std::thread::hardware_concurrency(), total));
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

      for (std::size_t k = 0; k < total; ++k) {
        const auto pi = k / run_seeds.size();
        const auto name = "p" + std::to_string(pi) + "_" + file_safe(records[k].header.policy) + "__seed" +
                          std::to_string(run_seeds[k % run_seeds.size()]) + ".ndjson";
        write_file_atomic(fs::path(out_dir) / "records" / name, to_ndjson(records[k]));
      }
      const auto table = compare(records);
      write_file_atomic(fs::path(out_dir) / "comparison.json", comparison_json(table).dump(2) + "\n");
      write_file_atomic(fs::path(out_dir) / "comparison.csv", comparison_csv(table));
      render_charts(records, out_dir);
      for (const auto& p : table.policies)
        std::cout << p.policy << ": mean total_scheduled " << p.total_scheduled << " over " << p.runs << " run(s)\n";
      return kExitOk;
    }

    if (validate->parsed()) {
      const auto trace = parse_trace_file(trace_path);
      const auto violations = config_path.empty() ? validate_trace(trace)
                                                  : validate_trace_for_cluster(trace, load_env_config(config_path).cluster);
      for (const auto& v : violations)
        std::cout << "seq " << v.seq << ": " << violation_kind_name(v.kind) << ": " << v.reason << "\n";
      if (!violations.empty()) {
        std::cerr << "vmsched: " << violations.size() << " violation(s)\n";
        return kExitDomainError;
      }
      std::cout << "ok: " << trace.size() << " requests\n";
      return kExitOk;
    }

    if (gen->parsed()) {
      auto cfg = load_gen_config(gen_path);
      if (seed_given) cfg.seed = seed;
      write_file_atomic(out_path, serialize_trace(generate_trace(cfg)));
      return kExitOk;
    }

    if (stats->parsed()) {
      const auto s = trace_stats(parse_trace_file(trace_path));
      nlohmann::ordered_json j{{"n_requests", s.n_requests},
                               {"n_alloc", s.n_alloc},
                               {"n_release", s.n_release},
                               {"n_flavors", s.n_flavors},
                               {"max_concurrent_vms", s.max_concurrent_vms}};
      std::cout << j.dump() << "\n";
      return kExitOk;
    }

    if (train->parsed()) {
      source.check();
      auto in = load_episode_inputs(config_path, scenario_name, reward_mode);
      lq.seed = seed_given ? seed : in.cfg.seed;
      if (auto problem = lq.check(); !problem.empty()) throw UsageError(problem);
      std::shared_ptr<const Trace> fixed;
      if (!source.trace_path.empty()) fixed = source.load(0);
      const auto base = lq.seed;
      auto factory = [&](std::size_t episode) {
        return EpisodeSpec{in.cfg, in.scenario, fixed ? fixed : source.load(base * 1000003ULL + episode)};
      };
      const auto result = train_linear_q(factory, lq);
      write_file_atomic(out_path, linear_q_to_json(result.weights, lq).dump(2) + "\n");
      std::cout << "trained " << lq.episodes << " episode(s), " << result.total_steps << " step(s)\n";
      return kExitOk;
    }

    if (bench->parsed()) {
      require_policy(bench_opts.policy);
      const auto r = run_benchmark(bench_opts);
      nlohmann::ordered_json j{{"servers", bench_opts.servers}, {"policy", bench_opts.policy},
                               {"steps", r.steps},             {"episodes", r.episodes},
                               {"seconds", r.seconds},         {"steps_per_second", r.steps_per_second}};
      std::cout << j.dump() << "\n";
      return kExitOk;
    }

    if (replay->parsed()) {
      source.check();
      auto in = load_episode_inputs(config_path, scenario_name, reward_mode);
      if (seed_given) in.cfg.seed = seed;
      Environment env;
      auto obs = env.reset(in.cfg, in.scenario, source.load(in.cfg.seed));

      std::ostringstream out;
      nlohmann::ordered_json reset{{"reset", {{"obs", obs.normalized_flat()}, {"done", env.done()}}}};
      if (!env.done()) reset["reset"]["mask"] = env.action_mask();
      out << reset.dump() << "\n";
      for (std::size_t i = 0; i < actions.size(); ++i) {
        auto r = env.step(actions[i]);
        nlohmann::ordered_json line{{"step", i},     {"action", actions[i]},           {"reward", r.reward},
                                    {"done", r.done}, {"info", r.info.as_map()}, {"obs", r.obs.normalized_flat()}};
        out << line.dump() << "\n";
      }
      if (out_path == "-")
        std::cout << out.str();
      else
        write_file_atomic(out_path, out.str());
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "vmsched: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "vmsched: " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    std::cerr << "vmsched: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace vmsched
