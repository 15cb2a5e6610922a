#include "vmsched/config.hpp"

#include <set>

#include <yaml-cpp/yaml.h>

#include "vmsched/error.hpp"
#include "vmsched/io.hpp"

namespace vmsched {

namespace {

YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("YAML: ") + e.what());
  }
}

void reject_unknown(const YAML::Node& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section) return;
  if (!section.IsMap()) throw Error(ErrorCode::InvalidConfig, name + " must be a mapping");
  for (const auto& kv : section) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown key " + name + "." + key);
  }
}

template <typename T>
T get(const YAML::Node& section, const std::string& section_name, const std::string& key) {
  const auto node = section[key];
  if (!node || node.IsNull()) throw Error(ErrorCode::InvalidConfig, "missing " + section_name + "." + key);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad value for " + section_name + "." + key);
  }
}

template <typename T>
T get_or(const YAML::Node& section, const std::string& section_name, const std::string& key, T fallback) {
  if (!section) return fallback;
  const auto node = section[key];
  if (!node || node.IsNull()) return fallback;
  return get<T>(section, section_name, key);
}

}  // namespace

EnvConfig parse_env_config(const std::string& yaml_text) {
  const auto root = load_yaml(yaml_text);
  if (!root.IsMap()) throw Error(ErrorCode::InvalidConfig, "config must be a mapping");

  const auto cluster = root["cluster_args"];
  const auto env = root["env_args"];
  const auto ext = root["vmsched_ext"];
  if (!cluster) throw Error(ErrorCode::InvalidConfig, "missing cluster_args");
  reject_unknown(cluster, "cluster_args", {"N", "CPU", "MEM", "double_numa"});
  reject_unknown(env, "env_args", {"allow_release", "growing_threshold", "growing_nums"});
  reject_unknown(ext, "vmsched_ext", {"reward_mode", "large_cpu_threshold", "max_servers", "seed", "invalid_penalty"});

  EnvConfig cfg;
  cfg.cluster.n_servers = get<std::int64_t>(cluster, "cluster_args", "N");
  cfg.cluster.cpu = get<std::int64_t>(cluster, "cluster_args", "CPU");
  cfg.cluster.mem = get<std::int64_t>(cluster, "cluster_args", "MEM");
  cfg.cluster.double_numa = get_or<bool>(cluster, "cluster_args", "double_numa", true);

  cfg.allow_release = get_or<bool>(env, "env_args", "allow_release", false);
  if (env && env["growing_threshold"] && !env["growing_threshold"].IsNull())
    cfg.growing_threshold = get<double>(env, "env_args", "growing_threshold");
  cfg.growing_nums = get_or<std::int64_t>(env, "env_args", "growing_nums", 0);

  const auto reward = get_or<std::string>(ext, "vmsched_ext", "reward_mode", "per-alloc");
  const auto mode = parse_reward_mode(reward);
  if (!mode) throw Error(ErrorCode::InvalidConfig, "unknown reward_mode " + reward);
  cfg.reward_mode = *mode;
  cfg.cluster.large_cpu_threshold = get_or<std::int64_t>(ext, "vmsched_ext", "large_cpu_threshold", 8);
  cfg.cluster.max_servers = get_or<std::int64_t>(ext, "vmsched_ext", "max_servers", 0);
  cfg.seed = get_or<std::uint64_t>(ext, "vmsched_ext", "seed", 0);
  cfg.invalid_penalty = get_or<double>(ext, "vmsched_ext", "invalid_penalty", 0.0);

  if (auto problem = cfg.cluster.check(); !problem.empty()) throw Error(ErrorCode::InvalidConfig, problem);
  if (cfg.growing_threshold && !(*cfg.growing_threshold > 0.0 && *cfg.growing_threshold <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "growing_threshold must be in (0,1]");
  if (cfg.growing_threshold && cfg.growing_nums < 1)
    throw Error(ErrorCode::InvalidConfig, "growing_nums must be >= 1 when growing_threshold is set");
  return cfg;
}

EnvConfig load_env_config(const std::string& path) { return parse_env_config(read_file(path)); }

GenConfig parse_gen_config(const std::string& yaml_text) {
  const auto root = load_yaml(yaml_text);
  if (!root.IsMap()) throw Error(ErrorCode::InvalidConfig, "generator config must be a mapping");
  reject_unknown(root, "gen", {"n_alloc", "release_prob", "mean_lifetime", "seed", "flavors"});

  GenConfig cfg;
  cfg.n_alloc = get<std::size_t>(root, "gen", "n_alloc");
  cfg.release_prob = get_or<double>(root, "gen", "release_prob", 0.0);
  cfg.mean_lifetime = get_or<double>(root, "gen", "mean_lifetime", 1.0);
  cfg.seed = get_or<std::uint64_t>(root, "gen", "seed", 0);

  const auto flavors = root["flavors"];
  if (!flavors || !flavors.IsSequence()) throw Error(ErrorCode::InvalidConfig, "flavors must be a list");
  for (const auto& f : flavors) {
    reject_unknown(f, "flavors[]", {"cpu", "mem", "weight"});
    cfg.flavor_weights.emplace_back(Flavor{get<std::int64_t>(f, "flavors[]", "cpu"), get<std::int64_t>(f, "flavors[]", "mem")},
                                    get_or<double>(f, "flavors[]", "weight", 1.0));
  }
  if (auto problem = cfg.check(); !problem.empty()) throw Error(ErrorCode::InvalidConfig, problem);
  return cfg;
}

GenConfig load_gen_config(const std::string& path) { return parse_gen_config(read_file(path)); }

}  // namespace vmsched
