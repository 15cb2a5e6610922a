#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vmsched/resource.hpp"

namespace vmsched {

enum class RequestKind : std::uint8_t { Alloc = 0, Release = 1 };

struct Request {
  std::size_t seq = 0;
  std::string vm_id;
  RequestKind kind = RequestKind::Alloc;
  Flavor flavor;  // meaningful only for Alloc
  std::int64_t time = 0;

  bool is_alloc() const { return kind == RequestKind::Alloc; }
  friend bool operator==(const Request&, const Request&) = default;
};

// An ordered, immutable request sequence plus the distinct flavors it allocates.
class Trace {
 public:
  Trace() = default;
  // Renumbers seq from position and derives the flavor catalog.
  explicit Trace(std::vector<Request> requests);

  const std::vector<Request>& requests() const { return requests_; }
  const std::set<Flavor>& flavor_catalog() const { return catalog_; }
  std::size_t size() const { return requests_.size(); }
  bool empty() const { return requests_.empty(); }
  const Request& operator[](std::size_t i) const { return requests_[i]; }

  friend bool operator==(const Trace& a, const Trace& b) { return a.requests_ == b.requests_; }

 private:
  std::vector<Request> requests_;
  std::set<Flavor> catalog_;
};

enum class ViolationKind {
  ReleaseBeforeAlloc,
  DoubleRelease,
  DoubleAlloc,
  TimeRegression,
  NegativeTime,
  InvalidFlavor,
};

std::string_view violation_kind_name(ViolationKind kind);

struct Violation {
  std::size_t seq = 0;
  ViolationKind kind;
  std::string reason;
};

struct TraceStats {
  std::size_t n_requests = 0;
  std::size_t n_alloc = 0;
  std::size_t n_release = 0;
  std::size_t n_flavors = 0;
  std::size_t max_concurrent_vms = 0;
  friend bool operator==(const TraceStats&, const TraceStats&) = default;
};

struct GenConfig {
  std::size_t n_alloc = 0;
  double release_prob = 0.0;
  std::vector<std::pair<Flavor, double>> flavor_weights;
  double mean_lifetime = 1.0;
  std::uint64_t seed = 0;

  // Empty when valid, else the first problem found.
  std::string check() const;
};

// Maps a header name found in the file to one of the canonical columns
// vm_id, cpu, mem, time, type.
using ColumnMap = std::map<std::string, std::string>;

inline constexpr const char* kTraceHeader = "vm_id,cpu,mem,time,type";

Trace parse_trace(std::istream& source, const ColumnMap& column_map = {});
Trace parse_trace_file(const std::string& path, const ColumnMap& column_map = {});

// Canonical CSV form; parse_trace(serialize_trace(t)) == t.
std::string serialize_trace(const Trace& trace);

std::vector<Violation> validate_trace(const Trace& trace);

// Throws InvalidTrace when validate_trace reports anything.
TraceStats trace_stats(const Trace& trace);

Trace generate_trace(const GenConfig& cfg);

}  // namespace vmsched
