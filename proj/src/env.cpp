#include "vmsched/env.hpp"

#include <stdexcept>
#include <unordered_map>

#include "vmsched/error.hpp"

namespace vmsched {

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Fading: return "fading";
    case Scenario::Recovering: return "recovering";
    case Scenario::Expansion: return "expansion";
  }
  return "unknown";
}

std::optional<Scenario> parse_scenario(std::string_view name) {
  if (name == "fading") return Scenario::Fading;
  if (name == "recovering") return Scenario::Recovering;
  if (name == "expansion") return Scenario::Expansion;
  return std::nullopt;
}

std::string_view reward_mode_name(RewardMode m) { return m == RewardMode::PerAlloc ? "per-alloc" : "cpu-delta"; }

std::optional<RewardMode> parse_reward_mode(std::string_view name) {
  if (name == "per-alloc" || name == "PerAlloc") return RewardMode::PerAlloc;
  if (name == "cpu-delta" || name == "CpuDelta") return RewardMode::CpuDelta;
  return std::nullopt;
}

std::string check_scenario(const EnvConfig& cfg, Scenario scenario) {
  if (auto problem = cfg.cluster.check(); !problem.empty()) return problem;
  if (cfg.growing_threshold) {
    const double t = *cfg.growing_threshold;
    if (!(t > 0.0 && t <= 1.0)) return "growing_threshold must be in (0,1]";
    if (cfg.growing_nums < 1) return "growing_nums must be >= 1 when growing_threshold is set";
  }
  switch (scenario) {
    case Scenario::Fading:
      if (cfg.allow_release) return "fading requires allow_release: False";
      if (cfg.growing_threshold) return "fading must not set growing_threshold";
      break;
    case Scenario::Recovering:
      if (!cfg.allow_release) return "recovering requires allow_release: True";
      if (cfg.growing_threshold) return "recovering must not set growing_threshold";
      break;
    case Scenario::Expansion:
      if (!cfg.growing_threshold) return "expansion requires growing_threshold";
      break;
  }
  return {};
}

nlohmann::json to_json(const EnvConfig& cfg) {
  using nlohmann::json;
  json j;
  j["cluster_args"] = {{"N", cfg.cluster.n_servers},
                       {"CPU", cfg.cluster.cpu},
                       {"MEM", cfg.cluster.mem},
                       {"double_numa", cfg.cluster.double_numa}};
  j["env_args"] = {{"allow_release", cfg.allow_release},
                   {"growing_threshold", cfg.growing_threshold ? json(*cfg.growing_threshold) : json(nullptr)},
                   {"growing_nums", cfg.growing_nums}};
  j["vmsched_ext"] = {{"reward_mode", reward_mode_name(cfg.reward_mode)},
                      {"large_cpu_threshold", cfg.cluster.large_cpu_threshold},
                      {"max_servers", cfg.cluster.server_cap()},
                      {"invalid_penalty", cfg.invalid_penalty},
                      {"seed", cfg.seed}};
  return j;
}

std::string config_digest(const EnvConfig& cfg) {
  // FNV-1a, 64 bit. The seed is excluded so runs that differ only by seed align.
  auto j = to_json(cfg);
  j["vmsched_ext"].erase("seed");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

std::vector<float> Observation::normalized_flat() const {
  std::vector<float> out(node_free_norm);
  out.push_back(request_cpu_norm);
  out.push_back(request_mem_norm);
  out.push_back(request.is_large ? 1.0f : 0.0f);
  return out;
}

std::map<std::string, double> StepInfo::as_map() const {
  return {{"scheduled_total", static_cast<double>(scheduled_total)},
          {"released_total", static_cast<double>(released_total)},
          {"expansions", static_cast<double>(expansions)},
          {"servers_added", static_cast<double>(servers_added)},
          {"invalid_action", invalid_action ? 1.0 : 0.0},
          {"releases_skipped", static_cast<double>(releases_skipped)}};
}

Observation Environment::reset(const EnvConfig& cfg, Scenario scenario, std::shared_ptr<const Trace> trace) {
  if (!trace) throw Error(ErrorCode::InvalidTrace, "no trace");
  if (auto problem = check_scenario(cfg, scenario); !problem.empty()) throw Error(ErrorCode::InvalidConfig, problem);

  const auto violations = validate_trace_for_cluster(*trace, cfg.cluster);
  if (!violations.empty()) {
    const auto& v = violations.front();
    const auto code = v.kind == ViolationKind::InvalidFlavor ? ErrorCode::InvalidFlavor : ErrorCode::InvalidTrace;
    throw Error(code, std::string(violation_kind_name(v.kind)) + " at seq " + std::to_string(v.seq) + ": " + v.reason);
  }
  if (!cfg.allow_release) {
    for (const auto& r : trace->requests()) {
      if (!r.is_alloc())
        throw Error(ErrorCode::InvalidTraceForScenario, "release at seq " + std::to_string(r.seq) + " but " +
                                                            std::string(scenario_name(scenario)) +
                                                            " does not allow releases");
    }
  }

  cfg_ = cfg;
  scenario_ = scenario;
  trace_ = std::move(trace);
  cluster_.emplace(cfg_.cluster);
  cursor_ = 0;
  done_ = false;
  info_ = {};
  advance();
  return observe();
}

const Request* Environment::pending() const {
  if (done_ || !trace_ || cursor_ >= trace_->size()) return nullptr;
  return &(*trace_)[cursor_];
}

void Environment::advance() {
  const auto& requests = trace_->requests();
  while (cursor_ < requests.size() && !requests[cursor_].is_alloc()) {
    if (cluster_->live_vms().contains(requests[cursor_].vm_id)) {
      cluster_->release(requests[cursor_].vm_id);
      ++info_.released_total;
    } else {
      ++info_.releases_skipped;
    }
    ++cursor_;
  }
  if (cursor_ >= requests.size()) {
    done_ = true;
    mask_.clear();
    feasible_count_ = 0;
    return;
  }

  const auto& flavor = requests[cursor_].flavor;
  feasible_count_ = cluster_->feasible_actions(flavor, mask_);
  if (scenario_ == Scenario::Expansion && cfg_.growing_threshold) {
    const auto batch = static_cast<std::size_t>(cfg_.growing_nums);
    while (cluster_->utilization().cpu_used_frac >= *cfg_.growing_threshold || feasible_count_ == 0) {
      const auto added = cluster_->expand(batch);
      if (added == 0) break;
      ++info_.expansions;
      info_.servers_added += added;
      feasible_count_ = cluster_->feasible_actions(flavor, mask_);
    }
  }
  if (feasible_count_ == 0) done_ = true;
}

const ActionMask& Environment::action_mask() const {
  if (done_) throw Error(ErrorCode::EpisodeFinished, "episode is finished");
  return mask_;
}

Observation make_observation(const ClusterState& state, const Request* pending) {
  Observation obs;
  const auto& cc = state.config();
  obs.terminal = pending == nullptr;
  obs.server_count = state.server_count();
  obs.nodes_per_server = cc.nodes_per_server();
  obs.node_capacity = cc.node_capacity();
  obs.server_capacity = cc.server_capacity();

  const auto nodes = state.nodes();
  obs.node_free.reserve(nodes.size());
  obs.node_free_norm.reserve(nodes.size() * 2);
  const auto cap_cpu = static_cast<double>(obs.node_capacity.cpu);
  const auto cap_mem = static_cast<double>(obs.node_capacity.mem);
  for (const auto& n : nodes) {
    obs.node_free.push_back(n.free);
    obs.node_free_norm.push_back(static_cast<float>(static_cast<double>(n.free.cpu) / cap_cpu));
    obs.node_free_norm.push_back(static_cast<float>(static_cast<double>(n.free.mem) / cap_mem));
  }

  if (pending) {
    obs.request = {pending->flavor.cpu, pending->flavor.mem, state.is_large(pending->flavor)};
    obs.request_seq = pending->seq;
    obs.request_cpu_norm = static_cast<float>(static_cast<double>(pending->flavor.cpu) / static_cast<double>(cc.cpu));
    obs.request_mem_norm = static_cast<float>(static_cast<double>(pending->flavor.mem) / static_cast<double>(cc.mem));
  }
  return obs;
}

Observation Environment::observe() const { return make_observation(*cluster_, pending()); }

StepResult Environment::step(std::size_t flat_action) {
  if (!cluster_) throw Error(ErrorCode::EpisodeFinished, "environment was never reset");
  return step(action_from_index(flat_action, cluster_->nodes_per_server()));
}

StepResult Environment::step(const Action& action) {
  if (done_ || !cluster_) throw Error(ErrorCode::EpisodeFinished, "episode is finished");
  const auto& req = (*trace_)[cursor_];
  info_.invalid_action = false;

  StepResult result;
  if (!cluster_->can_place(action, req.flavor)) {
    done_ = true;
    info_.invalid_action = true;
    result.reward = cfg_.invalid_penalty;
  } else {
    cluster_->place(action, req.vm_id, req.flavor);
    ++info_.scheduled_total;
    result.reward = cfg_.reward_mode == RewardMode::PerAlloc
                        ? 1.0
                        : static_cast<double>(req.flavor.cpu) / static_cast<double>(cfg_.cluster.cpu);
    ++cursor_;
    advance();
  }
  if (check_invariants_) verify_cluster();

  result.done = done_;
  result.info = info_;
  result.obs = observe();
  return result;
}

void Environment::verify_cluster() const {
  if (auto problem = conservation_problem(*cluster_); !problem.empty()) throw std::logic_error(problem);
}

std::string conservation_problem(const ClusterState& state) {
  const auto nodes = state.nodes();
  const auto nps = static_cast<std::size_t>(state.nodes_per_server());
  std::vector<ResourceVec> charged(nodes.size());
  for (const auto& [id, rec] : state.live_vms()) {
    const auto base = rec.placement.server * nps;
    if (rec.placement.slot == Slot::Both) {
      charged[base] += rec.flavor.half();
      charged[base + 1] += rec.flavor.half();
    } else {
      charged[base + static_cast<std::size_t>(rec.placement.slot)] += rec.flavor.demand();
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (!n.free.non_negative() || !n.capacity.covers(n.free))
      return "node " + std::to_string(i) + " free out of [0, capacity]";
    if (n.capacity - n.free != charged[i]) return "node " + std::to_string(i) + " charge mismatch";
  }
  return {};
}

EpisodeRecord run_episode(const EnvConfig& cfg, Scenario scenario, std::shared_ptr<const Trace> trace,
                          Policy& policy) {
  EpisodeRecord record;
  record.header = {std::string(scenario_name(scenario)), config_digest(cfg), policy.name(), cfg.seed};

  Environment env;
  auto obs = env.reset(cfg, scenario, std::move(trace));
  std::size_t step = 0;
  while (!env.done()) {
    const auto& mask = env.action_mask();
    const auto action = policy.act(obs, mask);
    const auto request_seq = obs.request_seq;
    auto result = env.step(action);
    const auto util = env.cluster().utilization();
    record.steps.push_back(StepEntry{step++, request_seq, action, result.reward, result.done, util.cpu_used_frac,
                                     util.mem_used_frac, env.cluster().server_count(), result.info.expansions,
                                     result.info.invalid_action});
    obs = std::move(result.obs);
  }
  return record;
}

}  // namespace vmsched
