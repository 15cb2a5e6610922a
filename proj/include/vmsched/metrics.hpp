#pragma once

#include <filesystem>
#include <istream>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vmsched/record.hpp"

namespace vmsched {

struct RunSummary {
  std::size_t total_scheduled = 0;
  std::size_t episode_length = 0;
  double mean_cpu_used_frac = 0.0;
  double max_cpu_used_frac = 0.0;
  double mean_mem_used_frac = 0.0;
  double max_mem_used_frac = 0.0;
  double total_reward = 0.0;
  std::size_t expansions = 0;
  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

// An empty record summarizes to all zeros.
RunSummary summarize(const EpisodeRecord& record);

struct ComparisonRow {
  RecordHeader header;
  RunSummary summary;
  // (scenario, config_digest) differs from the first row's.
  bool digest_mismatch = false;
};

// Arithmetic means of RunSummary fields over one policy's runs.
struct PolicyAggregate {
  std::string policy;
  std::size_t runs = 0;
  double total_scheduled = 0.0;
  double episode_length = 0.0;
  double mean_cpu_used_frac = 0.0;
  double max_cpu_used_frac = 0.0;
  double mean_mem_used_frac = 0.0;
  double max_mem_used_frac = 0.0;
  double total_reward = 0.0;
  double expansions = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;         // input order
  std::vector<PolicyAggregate> policies;   // first-appearance order
  bool digests_match = true;
};

ComparisonTable compare(const std::vector<EpisodeRecord>& runs);
std::string comparison_csv(const ComparisonTable& table);
nlohmann::ordered_json comparison_json(const ComparisonTable& table);

// NDJSON: one header line {"header": {...}} followed by one line per step.
nlohmann::ordered_json step_json(const StepEntry& e);
std::string header_line(const RecordHeader& h);
std::string step_line(const StepEntry& e);
std::string to_ndjson(const EpisodeRecord& record);
// Throws MalformedRow with the offending line number.
EpisodeRecord parse_ndjson(std::istream& in);

// Append-only NDJSON writer; concurrent writers are serialized.
class RecordSink {
 public:
  explicit RecordSink(std::ostream& out) : out_(out) {}
  void write_header(const RecordHeader& h);
  void append(const StepEntry& e);

 private:
  std::mutex mu_;
  std::ostream& out_;
};

// Writes <out_dir>/charts/*.svg and <out_dir>/report.html:
//   one utilization-vs-step chart per run; with two or more runs also a
//   cpu_used_frac overlay and a total_scheduled bar chart per policy.
// Each SVG embeds its plotted data as JSON in <metadata id="chart-data">.
// Returns the written paths, report last. Throws IoError.
std::vector<std::filesystem::path> render_charts(const std::vector<EpisodeRecord>& runs,
                                                 const std::filesystem::path& out_dir);

// The JSON embedded by render_charts, parsed back out of an SVG document.
nlohmann::json chart_data(const std::string& svg);

}  // namespace vmsched
