#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "vmsched/resource.hpp"
#include "vmsched/trace.hpp"

namespace vmsched {

struct ClusterConfig {
  std::int64_t n_servers = 1;
  std::int64_t cpu = 1;
  std::int64_t mem = 1;
  bool double_numa = true;
  // 0 means the default of 10 * n_servers.
  std::int64_t max_servers = 0;
  std::int64_t large_cpu_threshold = 8;

  std::int64_t server_cap() const { return max_servers > 0 ? max_servers : 10 * n_servers; }
  int nodes_per_server() const { return double_numa ? 2 : 1; }
  ResourceVec node_capacity() const { return double_numa ? ResourceVec{cpu / 2, mem / 2} : ResourceVec{cpu, mem}; }
  ResourceVec server_capacity() const { return {cpu, mem}; }

  // Empty when valid, else the first problem found.
  std::string check() const;

  friend bool operator==(const ClusterConfig&, const ClusterConfig&) = default;
};

// Large flavors straddle both NUMA nodes of a server, charging half their
// demand to each. Only meaningful on double-NUMA clusters; always false otherwise.
bool is_large(const Flavor& flavor, const ClusterConfig& cfg);

// Large flavors must split evenly. Returns violations for every Alloc that
// does not, in addition to the structural checks of validate_trace.
std::vector<Violation> validate_trace_for_cluster(const Trace& trace, const ClusterConfig& cfg);

struct NumaNode {
  ResourceVec free;
  ResourceVec capacity;
  friend bool operator==(const NumaNode&, const NumaNode&) = default;
};

enum class Slot : std::uint8_t { Numa0 = 0, Numa1 = 1, Both = 2 };

struct Placement {
  std::size_t server = 0;
  Slot slot = Slot::Numa0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct VmRecord {
  std::string vm_id;
  Flavor flavor;
  Placement placement;
  friend bool operator==(const VmRecord&, const VmRecord&) = default;
};

// A placement decision. numa is ignored for large flavors and must be 0 on
// single-NUMA clusters.
struct Action {
  std::size_t server = 0;
  int numa = 0;
  friend bool operator==(const Action&, const Action&) = default;
};

// Flat action index is server-major, numa-minor.
inline std::size_t flat_index(const Action& a, int nodes_per_server) {
  return a.server * static_cast<std::size_t>(nodes_per_server) + static_cast<std::size_t>(a.numa);
}
inline Action action_from_index(std::size_t index, int nodes_per_server) {
  const auto nps = static_cast<std::size_t>(nodes_per_server);
  return Action{index / nps, static_cast<int>(index % nps)};
}

// One byte per action; nonzero means feasible.
using ActionMask = std::vector<std::uint8_t>;

struct Utilization {
  double cpu_used_frac = 0.0;
  double mem_used_frac = 0.0;
};

class ClusterState {
 public:
  // Throws InvalidConfig.
  explicit ClusterState(ClusterConfig cfg);

  const ClusterConfig& config() const { return cfg_; }
  std::size_t server_count() const { return nodes_.size() / static_cast<std::size_t>(cfg_.nodes_per_server()); }
  int nodes_per_server() const { return cfg_.nodes_per_server(); }
  std::size_t action_count() const { return nodes_.size(); }

  // Flat node list, server-major.
  std::span<const NumaNode> nodes() const { return nodes_; }
  const NumaNode& node(std::size_t server, int numa) const { return nodes_[server * cfg_.nodes_per_server() + numa]; }
  std::span<const NumaNode> server_nodes(std::size_t server) const;

  const std::unordered_map<std::string, VmRecord>& live_vms() const { return live_vms_; }

  bool is_large(const Flavor& flavor) const { return vmsched::is_large(flavor, cfg_); }
  Placement placement_for(const Action& action, const Flavor& flavor) const;

  // False for out-of-range actions.
  bool can_place(const Action& action, const Flavor& flavor) const;

  // Throws DuplicateVm, Infeasible, InvalidFlavor.
  void place(const Action& action, const std::string& vm_id, const Flavor& flavor);
  // Throws UnknownVm.
  void release(const std::string& vm_id);
  // Appends up to count empty servers, saturating at the server cap. Returns the number added.
  std::size_t expand(std::size_t count);

  Utilization utilization() const;
  ActionMask feasible_actions(const Flavor& flavor) const;
  // Same as feasible_actions but reuses the caller's buffer; returns the number of feasible entries.
  std::size_t feasible_actions(const Flavor& flavor, ActionMask& out) const;

  friend bool operator==(const ClusterState&, const ClusterState&) = default;

 private:
  ClusterConfig cfg_;
  std::vector<NumaNode> nodes_;
  std::unordered_map<std::string, VmRecord> live_vms_;
  ResourceVec total_free_;
  ResourceVec total_capacity_;
};

inline ClusterState new_cluster(const ClusterConfig& cfg) { return ClusterState(cfg); }

std::string_view slot_name(Slot slot);

// Snapshot document: servers -> nodes -> free/capacity, plus live_vms sorted by vm_id.
nlohmann::json snapshot_json(const ClusterState& state);

}  // namespace vmsched
