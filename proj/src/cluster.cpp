#include "vmsched/cluster.hpp"

#include <algorithm>
#include <map>

#include "vmsched/error.hpp"

namespace vmsched {

std::string ClusterConfig::check() const {
  if (n_servers < 1) return "N must be >= 1";
  if (cpu < 1) return "CPU must be >= 1";
  if (mem < 1) return "MEM must be >= 1";
  if (server_cap() < n_servers) return "max_servers must be >= N";
  if (double_numa && (cpu % 2 != 0 || mem % 2 != 0)) return "CPU and MEM must be even when double_numa is set";
  if (large_cpu_threshold < 1) return "large_cpu_threshold must be >= 1";
  return {};
}

bool is_large(const Flavor& flavor, const ClusterConfig& cfg) {
  if (!cfg.double_numa) return false;
  return flavor.cpu > cfg.cpu / 2 || flavor.mem > cfg.mem / 2 || flavor.cpu >= cfg.large_cpu_threshold;
}

std::vector<Violation> validate_trace_for_cluster(const Trace& trace, const ClusterConfig& cfg) {
  auto out = validate_trace(trace);
  for (const auto& r : trace.requests()) {
    if (!r.is_alloc() || !is_large(r.flavor, cfg)) continue;
    if (r.flavor.cpu % 2 != 0 || r.flavor.mem % 2 != 0) {
      out.push_back({r.seq, ViolationKind::InvalidFlavor,
                     "large flavor {" + std::to_string(r.flavor.cpu) + "," + std::to_string(r.flavor.mem) +
                         "} must have even cpu and mem"});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.seq < b.seq; });
  return out;
}

ClusterState::ClusterState(ClusterConfig cfg) : cfg_(cfg) {
  if (auto problem = cfg_.check(); !problem.empty()) throw Error(ErrorCode::InvalidConfig, problem);
  expand(static_cast<std::size_t>(cfg_.n_servers));
}

std::span<const NumaNode> ClusterState::server_nodes(std::size_t server) const {
  const auto nps = static_cast<std::size_t>(cfg_.nodes_per_server());
  return std::span<const NumaNode>(nodes_).subspan(server * nps, nps);
}

Placement ClusterState::placement_for(const Action& action, const Flavor& flavor) const {
  if (is_large(flavor)) return {action.server, Slot::Both};
  return {action.server, action.numa == 1 ? Slot::Numa1 : Slot::Numa0};
}

bool ClusterState::can_place(const Action& action, const Flavor& flavor) const {
  if (action.server >= server_count() || action.numa < 0 || action.numa >= cfg_.nodes_per_server()) return false;
  if (is_large(flavor)) {
    const auto half = flavor.half();
    return node(action.server, 0).free.covers(half) && node(action.server, 1).free.covers(half);
  }
  return node(action.server, action.numa).free.covers(flavor.demand());
}

void ClusterState::place(const Action& action, const std::string& vm_id, const Flavor& flavor) {
  if (live_vms_.contains(vm_id)) throw Error(ErrorCode::DuplicateVm, "vm " + vm_id + " is already live");
  if (!can_place(action, flavor))
    throw Error(ErrorCode::Infeasible, "vm " + vm_id + " does not fit at server " + std::to_string(action.server) +
                                           " numa " + std::to_string(action.numa));
  const auto placement = placement_for(action, flavor);
  const auto nps = static_cast<std::size_t>(cfg_.nodes_per_server());
  if (placement.slot == Slot::Both) {
    if (flavor.cpu % 2 != 0 || flavor.mem % 2 != 0)
      throw Error(ErrorCode::InvalidFlavor, "large flavor must have even cpu and mem");
    nodes_[placement.server * nps].free -= flavor.half();
    nodes_[placement.server * nps + 1].free -= flavor.half();
  } else {
    nodes_[placement.server * nps + static_cast<std::size_t>(placement.slot)].free -= flavor.demand();
  }
  total_free_ -= flavor.demand();
  live_vms_.emplace(vm_id, VmRecord{vm_id, flavor, placement});
}

void ClusterState::release(const std::string& vm_id) {
  auto it = live_vms_.find(vm_id);
  if (it == live_vms_.end()) throw Error(ErrorCode::UnknownVm, "vm " + vm_id + " is not live");
  const auto& rec = it->second;
  const auto nps = static_cast<std::size_t>(cfg_.nodes_per_server());
  if (rec.placement.slot == Slot::Both) {
    nodes_[rec.placement.server * nps].free += rec.flavor.half();
    nodes_[rec.placement.server * nps + 1].free += rec.flavor.half();
  } else {
    nodes_[rec.placement.server * nps + static_cast<std::size_t>(rec.placement.slot)].free += rec.flavor.demand();
  }
  total_free_ += rec.flavor.demand();
  live_vms_.erase(it);
}

std::size_t ClusterState::expand(std::size_t count) {
  const auto cap = static_cast<std::size_t>(cfg_.server_cap());
  const auto current = server_count();
  const auto added = std::min(count, cap > current ? cap - current : 0);
  const auto node_cap = cfg_.node_capacity();
  for (std::size_t i = 0; i < added * static_cast<std::size_t>(cfg_.nodes_per_server()); ++i) {
    nodes_.push_back(NumaNode{node_cap, node_cap});
    total_free_ += node_cap;
    total_capacity_ += node_cap;
  }
  return added;
}

Utilization ClusterState::utilization() const {
  if (total_capacity_.cpu == 0 || total_capacity_.mem == 0) return {};
  // (capacity - free) / capacity rather than 1 - free / capacity: one rounding, so
  // e.g. 3200 of 4000 cores compares equal to a 0.8 threshold.
  const auto used = total_capacity_ - total_free_;
  return {static_cast<double>(used.cpu) / static_cast<double>(total_capacity_.cpu),
          static_cast<double>(used.mem) / static_cast<double>(total_capacity_.mem)};
}

std::size_t ClusterState::feasible_actions(const Flavor& flavor, ActionMask& out) const {
  out.assign(nodes_.size(), 0);
  std::size_t feasible = 0;
  if (is_large(flavor)) {
    const auto half = flavor.half();
    for (std::size_t s = 0; s < nodes_.size(); s += 2) {
      if (nodes_[s].free.covers(half) && nodes_[s + 1].free.covers(half)) {
        out[s] = out[s + 1] = 1;
        feasible += 2;
      }
    }
  } else {
    const auto demand = flavor.demand();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].free.covers(demand)) {
        out[i] = 1;
        ++feasible;
      }
    }
  }
  return feasible;
}

ActionMask ClusterState::feasible_actions(const Flavor& flavor) const {
  ActionMask mask;
  feasible_actions(flavor, mask);
  return mask;
}

std::string_view slot_name(Slot slot) {
  switch (slot) {
    case Slot::Numa0: return "numa0";
    case Slot::Numa1: return "numa1";
    case Slot::Both: return "both";
  }
  return "unknown";
}

nlohmann::json snapshot_json(const ClusterState& state) {
  using nlohmann::json;
  auto vec = [](const ResourceVec& v) { return json{{"cpu", v.cpu}, {"mem", v.mem}}; };

  json servers = json::array();
  for (std::size_t s = 0; s < state.server_count(); ++s) {
    json nodes = json::array();
    for (const auto& n : state.server_nodes(s)) nodes.push_back({{"free", vec(n.free)}, {"capacity", vec(n.capacity)}});
    servers.push_back({{"nodes", std::move(nodes)}});
  }

  std::map<std::string, const VmRecord*> sorted;
  for (const auto& [id, rec] : state.live_vms()) sorted.emplace(id, &rec);
  json vms = json::array();
  for (const auto& [id, rec] : sorted) {
    vms.push_back({{"vm_id", id},
                   {"flavor", {{"cpu", rec->flavor.cpu}, {"mem", rec->flavor.mem}}},
                   {"placement", {{"server", rec->placement.server}, {"slot", slot_name(rec->placement.slot)}}}});
  }
  return json{{"servers", std::move(servers)}, {"live_vms", std::move(vms)}};
}

}  // namespace vmsched
