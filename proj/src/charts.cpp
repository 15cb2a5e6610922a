#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "vmsched/error.hpp"
#include "vmsched/io.hpp"
#include "vmsched/metrics.hpp"

namespace vmsched {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 360.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;
constexpr std::size_t kMaxPoints = 1500;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  if (std::fabs(v - std::round(v)) < 1e-9)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Every stride-th step plus the last one, so long episodes stay drawable.
std::vector<std::size_t> sample_indices(std::size_t n) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  const std::size_t stride = (n + kMaxPoints - 1) / kMaxPoints;
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  if (idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

std::string metadata_block(const nlohmann::json& data) {
  return "<metadata id=\"chart-data\"><![CDATA[" + data.dump() + "]]></metadata>\n";
}

std::string svg_open(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
    << "</text>\n";
  return o.str();
}

std::string line_chart(const std::string& kind, const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series) {
  double x_max = 1.0;
  double y_max = 1.0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x_max = std::max(x_max, x);
      y_max = std::max(y_max, y);
    }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + plot_w * x / x_max; };
  auto py = [&](double y) { return kTop + plot_h * (1.0 - y / y_max); };

  std::ostringstream o;
  o << svg_open(title);

  nlohmann::json data{{"type", kind}, {"x", x_label}, {"y", y_label}, {"series", nlohmann::json::array()}};
  for (const auto& s : series) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [x, y] : s.points) pts.push_back({x, y});
    data["series"].push_back({{"label", s.label}, {"points", std::move(pts)}});
  }
  o << metadata_block(data);

  o << "<g stroke=\"#ccc\" stroke-width=\"1\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = y_max * k / 4.0;
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(y)) << "\" x2=\"" << num(kLeft + plot_w) << "\" y2=\""
      << num(py(y)) << "\"/>\n";
  }
  o << "</g>\n<g fill=\"#333\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = y_max * k / 4.0;
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">" << tick_label(y)
      << "</text>\n";
    const double x = x_max * k / 4.0;
    o << "<text x=\"" << num(px(x)) << "\" y=\"" << num(kTop + plot_h + 16) << "\" text-anchor=\"middle\">"
      << tick_label(std::round(x)) << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
    << xml_escape(x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(y_label) << "</text>\n</g>\n";
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w) << "\" height=\""
    << num(plot_h) << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* color = kPalette[i % std::size(kPalette)];
    o << "<polyline class=\"series\" data-label=\"" << xml_escape(series[i].label) << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[i].points) o << num(px(x)) << ',' << num(py(y)) << ' ';
    o << "\"/>\n";
    const double ly = kTop + 12 + 16.0 * static_cast<double>(i);
    o << "<line x1=\"" << num(kWidth - kRight + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kWidth - kRight + 32)
      << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kWidth - kRight + 38) << "\" y=\"" << num(ly + 4) << "\">" << xml_escape(series[i].label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& bars) {
  double y_max = 1.0;
  for (const auto& b : bars) y_max = std::max(y_max, b.second);
  y_max *= 1.1;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto py = [&](double y) { return kTop + plot_h * (1.0 - y / y_max); };

  std::ostringstream o;
  o << svg_open(title);
  nlohmann::json data{{"type", "bar"}, {"y", y_label}, {"bars", nlohmann::json::array()}};
  for (const auto& [label, value] : bars) data["bars"].push_back({{"label", label}, {"value", value}});
  o << metadata_block(data);

  const double slot = plot_w / static_cast<double>(std::max<std::size_t>(bars.size(), 1));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    const double y = py(bars[i].second);
    o << "<rect class=\"bar\" data-label=\"" << xml_escape(bars[i].first) << "\" x=\"" << num(x) << "\" y=\""
      << num(y) << "\" width=\"" << num(slot * 0.7) << "\" height=\"" << num(kTop + plot_h - y) << "\" fill=\""
      << kPalette[i % std::size(kPalette)] << "\"/>\n";
    o << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(y - 4) << "\" text-anchor=\"middle\">"
      << tick_label(bars[i].second) << "</text>\n";
    o << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(kTop + plot_h + 16) << "\" text-anchor=\"middle\">"
      << xml_escape(bars[i].first) << "</text>\n";
  }
  o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + plot_h) << "\" x2=\"" << num(kLeft + plot_w)
    << "\" y2=\"" << num(kTop + plot_h) << "\" stroke=\"#333\"/>\n";
  o << "<text transform=\"translate(16," << num(kTop + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(y_label) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string run_label(const EpisodeRecord& run, const std::map<std::string, std::size_t>& policy_runs) {
  if (policy_runs.at(run.header.policy) == 1) return run.header.policy;
  return run.header.policy + " seed " + std::to_string(run.header.seed);
}

}  // namespace

std::vector<std::filesystem::path> render_charts(const std::vector<EpisodeRecord>& runs,
                                                 const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const auto charts_dir = out_dir / "charts";
  std::error_code ec;
  fs::create_directories(charts_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + charts_dir.string() + ": " + ec.message());

  std::map<std::string, std::size_t> policy_runs;
  for (const auto& r : runs) ++policy_runs[r.header.policy];

  std::vector<fs::path> written;
  std::vector<std::pair<std::string, std::string>> figures;  // caption, svg

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    Series cpu{"cpu_used_frac", {}};
    Series mem{"mem_used_frac", {}};
    for (auto k : sample_indices(run.steps.size())) {
      const auto& e = run.steps[k];
      cpu.points.emplace_back(static_cast<double>(e.step), e.cpu_used_frac);
      mem.points.emplace_back(static_cast<double>(e.step), e.mem_used_frac);
    }
    const auto label = run_label(run, policy_runs);
    auto svg = line_chart("utilization", "Utilization: " + label + " (" + run.header.scenario + ")", "step",
                          "used fraction", {cpu, mem});
    const auto path = charts_dir / ("run" + std::to_string(i) + "_" + file_safe(label) + "_utilization.svg");
    write_file_atomic(path, svg);
    written.push_back(path);
    figures.emplace_back("Utilization, " + label, std::move(svg));
  }

  if (runs.size() >= 2) {
    std::vector<Series> overlay;
    for (const auto& run : runs) {
      Series s{run_label(run, policy_runs), {}};
      for (auto k : sample_indices(run.steps.size()))
        s.points.emplace_back(static_cast<double>(run.steps[k].step), run.steps[k].cpu_used_frac);
      overlay.push_back(std::move(s));
    }
    auto svg = line_chart("overlay", "CPU used fraction by policy", "step", "cpu_used_frac", overlay);
    const auto path = charts_dir / "overlay_cpu_used_frac.svg";
    write_file_atomic(path, svg);
    written.push_back(path);
    figures.emplace_back("CPU used fraction, all runs", std::move(svg));

    const auto table = compare(runs);
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& p : table.policies) bars.emplace_back(p.policy, p.total_scheduled);
    svg = bar_chart("Scheduled VMs per policy (mean over runs)", "total_scheduled", bars);
    const auto bar_path = charts_dir / "total_scheduled.svg";
    write_file_atomic(bar_path, svg);
    written.push_back(bar_path);
    figures.emplace_back("Scheduled VMs per policy", std::move(svg));
  }

  const auto table = compare(runs);
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>vmsched report</title>\n"
       << "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
       << "td,th{border:1px solid #999;padding:4px 8px;text-align:right}th{background:#eee}"
       << "figure{margin:1em 0}</style></head><body>\n<h1>Scheduling report</h1>\n";
  if (!table.digests_match) html << "<p><strong>Warning:</strong> runs use different scenarios or configs.</p>\n";
  html << "<table><tr><th>policy</th><th>seed</th><th>scenario</th><th>total_scheduled</th><th>episode_length</th>"
       << "<th>mean cpu</th><th>max cpu</th><th>mean mem</th><th>max mem</th><th>total_reward</th>"
       << "<th>expansions</th></tr>\n";
  for (const auto& r : table.rows) {
    const auto& s = r.summary;
    html << "<tr><td>" << xml_escape(r.header.policy) << "</td><td>" << r.header.seed << "</td><td>"
         << xml_escape(r.header.scenario) << "</td><td>" << s.total_scheduled << "</td><td>" << s.episode_length
         << "</td><td>" << num(s.mean_cpu_used_frac) << "</td><td>" << num(s.max_cpu_used_frac) << "</td><td>"
         << num(s.mean_mem_used_frac) << "</td><td>" << num(s.max_mem_used_frac) << "</td><td>"
         << num(s.total_reward) << "</td><td>" << s.expansions << "</td></tr>\n";
  }
  html << "</table>\n";
  for (const auto& [caption, svg] : figures)
    html << "<figure>" << svg << "<figcaption>" << xml_escape(caption) << "</figcaption></figure>\n";
  html << "</body></html>\n";
  const auto report = out_dir / "report.html";
  write_file_atomic(report, html.str());
  written.push_back(report);
  return written;
}

nlohmann::json chart_data(const std::string& svg) {
  const std::string open = "<metadata id=\"chart-data\"><![CDATA[";
  const auto start = svg.find(open);
  if (start == std::string::npos) throw Error(ErrorCode::MalformedRow, "no chart-data metadata");
  const auto end = svg.find("]]></metadata>", start);
  if (end == std::string::npos) throw Error(ErrorCode::MalformedRow, "unterminated chart-data metadata");
  return nlohmann::json::parse(svg.substr(start + open.size(), end - start - open.size()));
}

}  // namespace vmsched
