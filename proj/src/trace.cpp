#include "vmsched/trace.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "vmsched/error.hpp"

namespace vmsched {

Trace::Trace(std::vector<Request> requests) : requests_(std::move(requests)) {
  for (std::size_t i = 0; i < requests_.size(); ++i) {
    requests_[i].seq = i;
    if (requests_[i].is_alloc()) catalog_.insert(requests_[i].flavor);
  }
}

std::string_view violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::ReleaseBeforeAlloc: return "ReleaseBeforeAlloc";
    case ViolationKind::DoubleRelease: return "DoubleRelease";
    case ViolationKind::DoubleAlloc: return "DoubleAlloc";
    case ViolationKind::TimeRegression: return "TimeRegression";
    case ViolationKind::NegativeTime: return "NegativeTime";
    case ViolationKind::InvalidFlavor: return "InvalidFlavor";
  }
  return "Unknown";
}

namespace {

enum Column : std::size_t { kVmId, kCpu, kMem, kTime, kType, kColumnCount };
constexpr std::array<std::string_view, kColumnCount> kColumnNames = {"vm_id", "cpu", "mem", "time", "type"};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return value;
}

}  // namespace

Trace parse_trace(std::istream& source, const ColumnMap& column_map) {
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(source, line)) throw Error(ErrorCode::MalformedRow, "missing header", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_commas(line);
  std::array<std::size_t, kColumnCount> index;
  index.fill(std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name(header[i]);
    if (auto it = column_map.find(name); it != column_map.end()) name = it->second;
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (name != kColumnNames[c]) continue;
      if (index[c] != std::numeric_limits<std::size_t>::max())
        throw Error(ErrorCode::MalformedRow, "duplicate column " + name, 1);
      index[c] = i;
    }
  }
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    if (index[c] == std::numeric_limits<std::size_t>::max())
      throw Error(ErrorCode::MalformedRow, "header lacks column " + std::string(kColumnNames[c]), 1);
  }

  std::vector<Request> requests;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const auto fields = split_commas(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::MalformedRow,
                  "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()),
                  line_no);

    Request req;
    req.vm_id = std::string(fields[index[kVmId]]);
    if (req.vm_id.empty()) throw Error(ErrorCode::MalformedRow, "empty vm_id", line_no);

    const auto type = parse_int(fields[index[kType]]);
    if (!type) throw Error(ErrorCode::MalformedRow, "non-numeric type", line_no);
    if (*type != 0 && *type != 1)
      throw Error(ErrorCode::UnknownType, "type " + std::to_string(*type) + " at line " + std::to_string(line_no));
    req.kind = *type == 0 ? RequestKind::Alloc : RequestKind::Release;

    const auto time = parse_int(fields[index[kTime]]);
    if (!time) throw Error(ErrorCode::MalformedRow, "non-numeric time", line_no);
    req.time = *time;

    if (req.is_alloc()) {
      const auto cpu = parse_int(fields[index[kCpu]]);
      const auto mem = parse_int(fields[index[kMem]]);
      if (!cpu || !mem) throw Error(ErrorCode::MalformedRow, "non-numeric cpu/mem", line_no);
      req.flavor = Flavor{*cpu, *mem};
      if (!req.flavor.valid()) throw Error(ErrorCode::MalformedRow, "flavor cpu and mem must be >= 1", line_no);
    }
    requests.push_back(std::move(req));
  }
  return Trace(std::move(requests));
}

Trace parse_trace_file(const std::string& path, const ColumnMap& column_map) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open trace " + path);
  return parse_trace(in, column_map);
}

std::string serialize_trace(const Trace& trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace.requests()) {
    out += r.vm_id;
    out += ',';
    out += std::to_string(r.is_alloc() ? r.flavor.cpu : 0);
    out += ',';
    out += std::to_string(r.is_alloc() ? r.flavor.mem : 0);
    out += ',';
    out += std::to_string(r.time);
    out += ',';
    out += r.is_alloc() ? '0' : '1';
    out += '\n';
  }
  return out;
}

std::vector<Violation> validate_trace(const Trace& trace) {
  std::vector<Violation> out;
  std::unordered_set<std::string_view> live;
  std::unordered_set<std::string_view> seen;
  std::int64_t last_time = 0;

  for (const auto& r : trace.requests()) {
    if (r.time < 0) {
      out.push_back({r.seq, ViolationKind::NegativeTime, "negative timestamp"});
    } else if (r.time < last_time) {
      out.push_back({r.seq, ViolationKind::TimeRegression,
                     "time " + std::to_string(r.time) + " < previous " + std::to_string(last_time)});
    }
    last_time = std::max(last_time, r.time);

    if (r.is_alloc()) {
      if (!r.flavor.valid()) out.push_back({r.seq, ViolationKind::InvalidFlavor, "flavor cpu and mem must be >= 1"});
      if (!live.insert(r.vm_id).second)
        out.push_back({r.seq, ViolationKind::DoubleAlloc, "vm " + r.vm_id + " is already live"});
      seen.insert(r.vm_id);
    } else if (live.erase(r.vm_id) == 0) {
      if (seen.contains(r.vm_id))
        out.push_back({r.seq, ViolationKind::DoubleRelease, "vm " + r.vm_id + " was already released"});
      else
        out.push_back({r.seq, ViolationKind::ReleaseBeforeAlloc, "vm " + r.vm_id + " was never allocated"});
    }
  }
  return out;
}

TraceStats trace_stats(const Trace& trace) {
  if (const auto violations = validate_trace(trace); !violations.empty()) {
    const auto& v = violations.front();
    throw Error(ErrorCode::InvalidTrace, std::string(violation_kind_name(v.kind)) + " at seq " +
                                             std::to_string(v.seq) + " (" + std::to_string(violations.size()) +
                                             " violation(s))");
  }
  TraceStats s;
  s.n_requests = trace.size();
  s.n_flavors = trace.flavor_catalog().size();
  std::size_t live = 0;
  for (const auto& r : trace.requests()) {
    if (r.is_alloc()) {
      ++s.n_alloc;
      s.max_concurrent_vms = std::max(s.max_concurrent_vms, ++live);
    } else {
      ++s.n_release;
      --live;
    }
  }
  return s;
}

std::string GenConfig::check() const {
  if (flavor_weights.empty()) return "flavor_weights must be non-empty";
  for (const auto& [flavor, weight] : flavor_weights) {
    if (!flavor.valid()) return "flavor cpu and mem must be >= 1";
    if (!(weight > 0.0) || !std::isfinite(weight)) return "flavor weights must be positive";
  }
  if (!(release_prob >= 0.0 && release_prob <= 1.0)) return "release_prob must be in [0,1]";
  if (!(mean_lifetime >= 1.0) || !std::isfinite(mean_lifetime)) return "mean_lifetime must be >= 1";
  return {};
}

namespace {

// Uniform in [0,1) from the top 53 bits; avoids std::*_distribution so the
// stream is identical across standard library implementations.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Geometric on {1,2,...} with the given mean, by inversion.
std::int64_t geometric_lifetime(std::mt19937_64& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  const double u = unit_uniform(rng);
  return 1 + static_cast<std::int64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
}

}  // namespace

Trace generate_trace(const GenConfig& cfg) {
  if (auto problem = cfg.check(); !problem.empty()) throw Error(ErrorCode::InvalidConfig, problem);

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& fw : cfg.flavor_weights) cumulative.push_back(total += fw.second);

  // Pending releases keyed by (due time, alloc index) so ties keep alloc order.
  std::map<std::pair<std::int64_t, std::size_t>, std::string> pending;
  std::vector<Request> out;
  out.reserve(cfg.n_alloc * 2);

  auto emit_release = [&out](std::string vm_id, std::int64_t time) {
    Request r;
    r.vm_id = std::move(vm_id);
    r.kind = RequestKind::Release;
    r.time = time;
    out.push_back(std::move(r));
  };

  for (std::size_t i = 0; i < cfg.n_alloc; ++i) {
    const auto now = static_cast<std::int64_t>(i);
    while (!pending.empty() && pending.begin()->first.first <= now) {
      emit_release(std::move(pending.begin()->second), now);
      pending.erase(pending.begin());
    }

    const double pick = unit_uniform(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;

    Request r;
    r.vm_id = "vm" + std::to_string(i);
    r.kind = RequestKind::Alloc;
    r.flavor = cfg.flavor_weights[static_cast<std::size_t>(it - cumulative.begin())].first;
    r.time = now;
    out.push_back(r);

    if (unit_uniform(rng) < cfg.release_prob) {
      pending.emplace(std::make_pair(now + geometric_lifetime(rng, cfg.mean_lifetime), i), r.vm_id);
    }
  }
  for (auto& [key, vm_id] : pending) emit_release(std::move(vm_id), key.first);

  return Trace(std::move(out));
}

}  // namespace vmsched
