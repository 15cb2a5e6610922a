#pragma once

// Shared helpers for the unit and acceptance suites.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "vmsched/cluster.hpp"
#include "vmsched/trace.hpp"

namespace vmsched::testing {

inline std::string data_path(const std::string& name) { return std::string(VMSCHED_TEST_DATA) + "/" + name; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vmsched_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

inline Request alloc(std::string id, std::int64_t cpu, std::int64_t mem, std::int64_t time = 0) {
  return Request{0, std::move(id), RequestKind::Alloc, Flavor{cpu, mem}, time};
}
inline Request release(std::string id, std::int64_t time = 0) {
  return Request{0, std::move(id), RequestKind::Release, Flavor{}, time};
}

inline ClusterConfig reference_cluster() { return ClusterConfig{100, 40, 90, true, 0, 8}; }

inline std::vector<std::pair<Flavor, double>> mixed_flavors() {
  return {{Flavor{1, 2}, 0.25}, {Flavor{2, 4}, 0.25}, {Flavor{4, 8}, 0.2},
          {Flavor{8, 16}, 0.15}, {Flavor{16, 32}, 0.1}, {Flavor{2, 8}, 0.05}};
}

inline Flavor random_flavor(std::mt19937_64& rng) {
  static const std::vector<Flavor> pool = {{1, 2}, {2, 4}, {4, 8}, {2, 8}, {8, 16}, {12, 24}, {16, 32}, {24, 48}, {6, 40}};
  return pool[rng() % pool.size()];
}

// Random reachable state: a sequence of placements at random feasible
// actions interleaved with releases.
inline ClusterState random_state(std::mt19937_64& rng, const ClusterConfig& cfg, int ops) {
  ClusterState s(cfg);
  std::vector<std::string> live;
  for (int i = 0; i < ops; ++i) {
    if (!live.empty() && rng() % 4 == 0) {
      const auto k = rng() % live.size();
      s.release(live[k]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
      continue;
    }
    const auto f = random_flavor(rng);
    const auto mask = s.feasible_actions(f);
    std::vector<std::size_t> ok;
    for (std::size_t a = 0; a < mask.size(); ++a)
      if (mask[a]) ok.push_back(a);
    if (ok.empty()) continue;
    const auto id = "r" + std::to_string(i);
    s.place(action_from_index(ok[rng() % ok.size()], cfg.nodes_per_server()), id, f);
    live.push_back(id);
  }
  return s;
}

}  // namespace vmsched::testing
