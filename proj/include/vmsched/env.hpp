#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vmsched/cluster.hpp"
#include "vmsched/record.hpp"
#include "vmsched/trace.hpp"

namespace vmsched {

enum class Scenario { Fading, Recovering, Expansion };
enum class RewardMode { PerAlloc, CpuDelta };

std::string_view scenario_name(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view name);
std::string_view reward_mode_name(RewardMode m);
std::optional<RewardMode> parse_reward_mode(std::string_view name);

struct EnvConfig {
  ClusterConfig cluster;
  bool allow_release = false;
  std::optional<double> growing_threshold;
  std::int64_t growing_nums = 0;
  RewardMode reward_mode = RewardMode::PerAlloc;
  double invalid_penalty = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

// Empty when cfg is usable for the scenario, else the reason it is not.
std::string check_scenario(const EnvConfig& cfg, Scenario scenario);

nlohmann::json to_json(const EnvConfig& cfg);
// Stable 16-hex-digit digest of the canonical config document.
std::string config_digest(const EnvConfig& cfg);

struct PendingRequest {
  std::int64_t cpu = 0;
  std::int64_t mem = 0;
  bool is_large = false;
};

// Cluster status plus the pending Alloc. The raw view mirrors the cluster
// state exactly; the normalized view divides node values by node capacity
// and request values by full-server capacity.
struct Observation {
  bool terminal = false;
  std::size_t server_count = 0;
  int nodes_per_server = 1;
  ResourceVec node_capacity;
  ResourceVec server_capacity;
  std::vector<ResourceVec> node_free;  // server-major
  PendingRequest request;
  std::size_t request_seq = 0;

  std::vector<float> node_free_norm;  // cpu, mem per node
  float request_cpu_norm = 0.0f;
  float request_mem_norm = 0.0f;

  const ResourceVec& free_at(std::size_t server, int numa) const {
    return node_free[server * static_cast<std::size_t>(nodes_per_server) + static_cast<std::size_t>(numa)];
  }
  // node_free_norm followed by request cpu, mem and is_large.
  std::vector<float> normalized_flat() const;
};

// Observation of a cluster with the given request pending; nullptr for a terminal observation.
Observation make_observation(const ClusterState& state, const Request* pending);

struct StepInfo {
  std::size_t scheduled_total = 0;
  std::size_t released_total = 0;
  std::size_t expansions = 0;
  std::size_t servers_added = 0;
  bool invalid_action = false;
  std::size_t releases_skipped = 0;

  std::map<std::string, double> as_map() const;
  friend bool operator==(const StepInfo&, const StepInfo&) = default;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Replays a trace against a cluster. Releases are applied between
// decisions; the caller decides only where each Alloc goes.
class Environment {
 public:
  Environment() = default;

  // Throws InvalidConfig, InvalidTrace, InvalidFlavor, InvalidTraceForScenario.
  Observation reset(const EnvConfig& cfg, Scenario scenario, std::shared_ptr<const Trace> trace);
  // Throws EpisodeFinished once done.
  StepResult step(const Action& action);
  StepResult step(std::size_t flat_action);
  // Throws EpisodeFinished once done.
  const ActionMask& action_mask() const;

  bool done() const { return done_; }
  const StepInfo& info() const { return info_; }
  const ClusterState& cluster() const { return *cluster_; }
  const EnvConfig& config() const { return cfg_; }
  Scenario scenario() const { return scenario_; }
  std::size_t action_count() const { return cluster_ ? cluster_->action_count() : 0; }
  // The Alloc awaiting a decision; nullptr once done.
  const Request* pending() const;

  Observation observe() const;

  // Recheck cluster conservation after every step; throws std::logic_error on violation.
  void set_invariant_checks(bool on) { check_invariants_ = on; }

 private:
  void advance();
  void verify_cluster() const;

  EnvConfig cfg_;
  Scenario scenario_ = Scenario::Fading;
  std::shared_ptr<const Trace> trace_;
  std::optional<ClusterState> cluster_;
  std::size_t cursor_ = 0;
  bool done_ = true;
  ActionMask mask_;
  std::size_t feasible_count_ = 0;
  StepInfo info_;
  bool check_invariants_ = false;
};

// Empty when capacity - free equals the charged live-VM demand on every node
// and all free vectors are within [0, capacity]; else a description.
std::string conservation_problem(const ClusterState& state);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // mask has at least one feasible entry.
  virtual Action act(const Observation& obs, std::span<const std::uint8_t> mask) = 0;
};

EpisodeRecord run_episode(const EnvConfig& cfg, Scenario scenario, std::shared_ptr<const Trace> trace,
                          Policy& policy);

}  // namespace vmsched
