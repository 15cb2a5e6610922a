#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmsched/cluster.hpp"

namespace vmsched {

struct StepEntry {
  std::size_t step = 0;
  std::size_t request_seq = 0;
  Action action;
  double reward = 0.0;
  bool done = false;
  double cpu_used_frac = 0.0;
  double mem_used_frac = 0.0;
  std::size_t server_count = 0;
  // Cumulative expansion firings up to and including this step.
  std::size_t expansions = 0;
  bool invalid_action = false;

  friend bool operator==(const StepEntry&, const StepEntry&) = default;
};

struct RecordHeader {
  std::string scenario;
  std::string config_digest;
  std::string policy;
  std::uint64_t seed = 0;
  friend bool operator==(const RecordHeader&, const RecordHeader&) = default;
};

struct EpisodeRecord {
  RecordHeader header;
  std::vector<StepEntry> steps;
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

}  // namespace vmsched
