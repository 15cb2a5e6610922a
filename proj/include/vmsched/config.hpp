#pragma once

#include <string>

#include "vmsched/env.hpp"
#include "vmsched/trace.hpp"

namespace vmsched {

// Environment config in YAML. The cluster_args and env_args sections use
// the platform's original keys; artifact-only settings live under
// vmsched_ext. Unknown top-level sections are ignored, unknown keys inside
// the three known sections are rejected. Throws InvalidConfig.
EnvConfig parse_env_config(const std::string& yaml_text);
EnvConfig load_env_config(const std::string& path);

// Synthetic trace generator config:
//   n_alloc, release_prob, mean_lifetime, seed,
//   flavors: [{cpu, mem, weight}, ...]
GenConfig parse_gen_config(const std::string& yaml_text);
GenConfig load_gen_config(const std::string& path);

}  // namespace vmsched
