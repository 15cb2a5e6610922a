#include "vmsched/metrics.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "vmsched/error.hpp"

namespace vmsched {

RunSummary summarize(const EpisodeRecord& record) {
  RunSummary s;
  if (record.steps.empty()) return s;
  double cpu_sum = 0.0;
  double mem_sum = 0.0;
  for (const auto& e : record.steps) {
    if (!e.invalid_action) ++s.total_scheduled;
    s.total_reward += e.reward;
    cpu_sum += e.cpu_used_frac;
    mem_sum += e.mem_used_frac;
    s.max_cpu_used_frac = std::max(s.max_cpu_used_frac, e.cpu_used_frac);
    s.max_mem_used_frac = std::max(s.max_mem_used_frac, e.mem_used_frac);
  }
  s.episode_length = record.steps.size();
  const auto n = static_cast<double>(record.steps.size());
  s.mean_cpu_used_frac = cpu_sum / n;
  s.mean_mem_used_frac = mem_sum / n;
  s.expansions = record.steps.back().expansions;
  return s;
}

ComparisonTable compare(const std::vector<EpisodeRecord>& runs) {
  ComparisonTable table;
  std::map<std::string, std::size_t> policy_index;
  for (const auto& run : runs) {
    ComparisonRow row{run.header, summarize(run), false};
    if (!table.rows.empty()) {
      const auto& first = table.rows.front().header;
      row.digest_mismatch = first.scenario != run.header.scenario || first.config_digest != run.header.config_digest;
      if (row.digest_mismatch) table.digests_match = false;
    }

    auto [it, inserted] = policy_index.emplace(run.header.policy, table.policies.size());
    if (inserted) table.policies.push_back(PolicyAggregate{run.header.policy});
    auto& agg = table.policies[it->second];
    ++agg.runs;
    agg.total_scheduled += static_cast<double>(row.summary.total_scheduled);
    agg.episode_length += static_cast<double>(row.summary.episode_length);
    agg.mean_cpu_used_frac += row.summary.mean_cpu_used_frac;
    agg.max_cpu_used_frac += row.summary.max_cpu_used_frac;
    agg.mean_mem_used_frac += row.summary.mean_mem_used_frac;
    agg.max_mem_used_frac += row.summary.max_mem_used_frac;
    agg.total_reward += row.summary.total_reward;
    agg.expansions += static_cast<double>(row.summary.expansions);
    table.rows.push_back(std::move(row));
  }
  for (auto& agg : table.policies) {
    const auto n = static_cast<double>(agg.runs);
    for (double* field : {&agg.total_scheduled, &agg.episode_length, &agg.mean_cpu_used_frac, &agg.max_cpu_used_frac,
                          &agg.mean_mem_used_frac, &agg.max_mem_used_frac, &agg.total_reward, &agg.expansions})
      *field /= n;
  }
  return table;
}

namespace {

nlohmann::ordered_json summary_json(const RunSummary& s) {
  return {{"total_scheduled", s.total_scheduled},       {"episode_length", s.episode_length},
          {"mean_cpu_used_frac", s.mean_cpu_used_frac}, {"max_cpu_used_frac", s.max_cpu_used_frac},
          {"mean_mem_used_frac", s.mean_mem_used_frac}, {"max_mem_used_frac", s.max_mem_used_frac},
          {"total_reward", s.total_reward},             {"expansions", s.expansions}};
}

nlohmann::ordered_json header_json(const RecordHeader& h) {
  return {{"scenario", h.scenario}, {"config_digest", h.config_digest}, {"policy", h.policy}, {"seed", h.seed}};
}

std::string fmt_double(double v) { return nlohmann::json(v).dump(); }

}  // namespace

nlohmann::ordered_json comparison_json(const ComparisonTable& table) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    auto j = header_json(r.header);
    j["summary"] = summary_json(r.summary);
    j["digest_mismatch"] = r.digest_mismatch;
    rows.push_back(std::move(j));
  }
  nlohmann::ordered_json policies = nlohmann::ordered_json::array();
  for (const auto& p : table.policies) {
    policies.push_back({{"policy", p.policy},
                        {"runs", p.runs},
                        {"total_scheduled", p.total_scheduled},
                        {"episode_length", p.episode_length},
                        {"mean_cpu_used_frac", p.mean_cpu_used_frac},
                        {"max_cpu_used_frac", p.max_cpu_used_frac},
                        {"mean_mem_used_frac", p.mean_mem_used_frac},
                        {"max_mem_used_frac", p.max_mem_used_frac},
                        {"total_reward", p.total_reward},
                        {"expansions", p.expansions}});
  }
  return {{"digests_match", table.digests_match}, {"runs", std::move(rows)}, {"policies", std::move(policies)}};
}

std::string comparison_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "policy,seed,scenario,config_digest,total_scheduled,episode_length,mean_cpu_used_frac,max_cpu_used_frac,"
         "mean_mem_used_frac,max_mem_used_frac,total_reward,expansions,digest_mismatch\n";
  for (const auto& r : table.rows) {
    const auto& s = r.summary;
    out << r.header.policy << ',' << r.header.seed << ',' << r.header.scenario << ',' << r.header.config_digest << ','
        << s.total_scheduled << ',' << s.episode_length << ',' << fmt_double(s.mean_cpu_used_frac) << ','
        << fmt_double(s.max_cpu_used_frac) << ',' << fmt_double(s.mean_mem_used_frac) << ','
        << fmt_double(s.max_mem_used_frac) << ',' << fmt_double(s.total_reward) << ',' << s.expansions << ','
        << (r.digest_mismatch ? 1 : 0) << '\n';
  }
  return out.str();
}

nlohmann::ordered_json step_json(const StepEntry& e) {
  return {{"step", e.step},
          {"request_seq", e.request_seq},
          {"action", {{"server", e.action.server}, {"numa", e.action.numa}}},
          {"reward", e.reward},
          {"done", e.done},
          {"cpu_used_frac", e.cpu_used_frac},
          {"mem_used_frac", e.mem_used_frac},
          {"server_count", e.server_count},
          {"expansions", e.expansions},
          {"invalid_action", e.invalid_action}};
}

std::string header_line(const RecordHeader& h) {
  return nlohmann::ordered_json{{"header", header_json(h)}}.dump() + "\n";
}

std::string step_line(const StepEntry& e) { return step_json(e).dump() + "\n"; }

std::string to_ndjson(const EpisodeRecord& record) {
  std::string out = header_line(record.header);
  for (const auto& e : record.steps) out += step_line(e);
  return out;
}

EpisodeRecord parse_ndjson(std::istream& in) {
  EpisodeRecord rec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("header")) {
        const auto& h = j["header"];
        rec.header = {h.at("scenario").get<std::string>(), h.at("config_digest").get<std::string>(),
                      h.at("policy").get<std::string>(), h.at("seed").get<std::uint64_t>()};
        continue;
      }
      StepEntry e;
      e.step = j.at("step").get<std::size_t>();
      e.request_seq = j.at("request_seq").get<std::size_t>();
      e.action = {j.at("action").at("server").get<std::size_t>(), j.at("action").at("numa").get<int>()};
      e.reward = j.at("reward").get<double>();
      e.done = j.at("done").get<bool>();
      e.cpu_used_frac = j.at("cpu_used_frac").get<double>();
      e.mem_used_frac = j.at("mem_used_frac").get<double>();
      e.server_count = j.at("server_count").get<std::size_t>();
      e.expansions = j.value("expansions", std::size_t{0});
      e.invalid_action = j.value("invalid_action", false);
      rec.steps.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::MalformedRow, ex.what(), line_no);
    }
  }
  return rec;
}

void RecordSink::write_header(const RecordHeader& h) {
  std::lock_guard lock(mu_);
  out_ << header_line(h);
}

void RecordSink::append(const StepEntry& e) {
  std::lock_guard lock(mu_);
  out_ << step_line(e);
}

}  // namespace vmsched
