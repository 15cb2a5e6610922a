#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vmsched/env.hpp"
#include "vmsched/trace.hpp"

namespace vmsched {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Entry point for the vmsched tool. Exit 0 on success, 1 on domain errors
// (bad trace or config contents), 2 on usage errors.
int run_command(const std::vector<std::string>& argv);

// Policy spec: first-fit | best-fit | random | linear-q:<weights-file>.
// Returns nullptr for an unknown spec.
std::unique_ptr<Policy> make_policy(const std::string& spec, std::uint64_t seed);
bool is_known_policy_spec(const std::string& spec);

// Flavor mix used by the built-in benchmark and as a default generator catalog.
std::vector<std::pair<Flavor, double>> default_flavor_mix();

struct BenchOptions {
  std::int64_t servers = 100;
  std::int64_t cpu = 40;
  std::int64_t mem = 90;
  std::size_t steps = 100000;
  std::string policy = "first-fit";
  std::uint64_t seed = 1;
};

struct BenchResult {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  double seconds = 0.0;
  double steps_per_second = 0.0;
};

// Replays recovering-scenario synthetic traces on a double-NUMA cluster
// until at least opts.steps decisions have been made; only env and policy
// time is measured.
BenchResult run_benchmark(const BenchOptions& opts);

}  // namespace vmsched
